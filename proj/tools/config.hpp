#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nqce/estimators.hpp"
#include "nqce/inference.hpp"
#include "nqce/simulation.hpp"

namespace nqce::cli {

using Json = nlohmann::ordered_json;

/// Every key the config accepts, with its default value.
const Json& default_config();

/// Defaults, then the config file, then --set overrides. Unknown keys and
/// type mismatches are Config errors naming the key.
Json resolve_config(const Json& file, const std::vector<std::string>& sets);

// "a.b.c=value"; value parsed as JSON when it parses, else taken as a string.
void apply_set(Json& config, const std::string& assignment);

std::uint64_t fnv1a(const std::string& bytes);
std::string config_hash(const Json& resolved);

struct EffectRequest {
  PolicySpec h, h_prime;
  double q = 0.5;
};

struct BandRequest {
  std::string axis = "q";
  EstimandKind t = EstimandKind::Star;
  PolicySpec policy;
  double q = 0.5;
  std::vector<double> grid;
  DeltaRange range;
  std::string effect;  // empty: quantile band; else an effect name over q
  PolicySpec h_prime;
};

/// Typed view of a resolved config. Conversion failures become Config errors.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir;
  std::string input;
  int threads = 0;
  DgpSpec dgp;
  std::vector<EstimandSpec> estimands;
  std::vector<std::string> warnings;  // e.g. duplicate estimands dropped
  std::vector<EffectRequest> effects;
  EstimatorOptions estimator;
  bool with_ipw = true;
  // learners see {exp(-X1/2), X1/(1+X2/2), X3} instead of the covariates
  bool transformed_features = false;
  BandOptions inference;
  BandRequest band;
  TruthOptions truth;
  int replicates = 200;
  std::string hash;
};

RunConfig typed_config(const Json& resolved);

PolicySpec policy_from_json(const Json& j, const std::string& where);

}  // namespace nqce::cli
