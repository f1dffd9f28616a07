#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nqce/core.hpp"
#include "nqce/estimators.hpp"
#include "nqce/policies.hpp"

namespace nqce {

enum class Scenario { A, B };

// How the second argument 1 + a_j of the outcome law is read.
enum class OutcomeScale { StdDev, Variance };
const char* to_string(Scenario s);
const char* to_string(OutcomeScale s);
OutcomeScale outcome_scale_from_string(const std::string& s);
Scenario scenario_from_string(const std::string& s);

/// Clustered observational study with exchangeable Gaussian copulas for the
/// treatments and the outcomes. Covariates per individual: X1, X2 ~ N(0,1),
/// X3 ~ Bernoulli(0.5).
struct DgpSpec {
  int n = 500;
  int min_size = 3;
  int max_size = 6;
  // P(A=1|X) = expit(c0 + c1 X1 + c2 X2 + c3 X3)
  std::array<double, 4> treatment_coef{-0.5, 0.3, 0.3, 0.3};
  double rho_a = 0.1;
  // mean b0 + b1 a_j + b2 peer_mean + b3 X1 + b4 X2 + b5 X3, scale 1 + a_j
  std::array<double, 6> outcome_coef{3.0, 1.5, 3.0, 5.0, 5.0, 2.0};
  // StdDev reproduces the published truth values; see README.
  OutcomeScale outcome_scale = OutcomeScale::StdDev;
  double rho_y = 0.1;
  Scenario scenario = Scenario::A;
  std::uint64_t seed = 0;

  void validate() const;
  // Names of fields that differ from the defaults (seed, n and scenario excluded).
  std::vector<std::string> overrides() const;
};

inline constexpr int kDgpCovariates = 3;

double true_margin(const DgpSpec& spec, std::span<const double> x);
std::vector<double> true_margins(const DgpSpec& spec, const Matrix& covariates);

// Conditional mean and standard deviation of Y_j(a).
double outcome_mean(const DgpSpec& spec, const TreatmentVector& a, int j, const Matrix& x);
double outcome_sd(const DgpSpec& spec, int own);

/// Learner features for Scenario B: {exp(-X1/2), X1/(1 + X2/2), X3}.
Matrix transformed_features(const Matrix& covariates);

Dataset generate_study(const DgpSpec& spec);

// ---------------------------------------------------------------------------
// Super-population truth

/// One potential outcome Y_J(a) per sampled cluster, for each t, with a drawn
/// from the true policy mass (for FIX, own treatment overwritten).
struct TruthSamples {
  std::vector<double> star, fix0, fix1;
  const std::vector<double>& of(EstimandKind t) const;
};

inline constexpr int kTruthBlock = 4096;

// Each block of kTruthBlock clusters has its own RNG stream, so the two
// versions agree bit for bit.
TruthSamples truth_samples_serial(const DgpSpec& spec, const PolicySpec& policy, long n_super,
                                  std::uint64_t seed);
TruthSamples truth_samples_omp(const DgpSpec& spec, const PolicySpec& policy, long n_super,
                               std::uint64_t seed);

struct TruthEntry {
  PolicySpec policy;
  EstimandKind t = EstimandKind::Star;
  double q = 0.5;
  double value = 0.0;
  double mc_se = 0.0;
  long n_super = 0;
  std::uint64_t seed = 0;
};

inline constexpr long kDefaultSuperPopulation = 2'000'000;
inline constexpr long kMinSuperPopulation = 100'000;

struct TruthOptions {
  long n_super = kDefaultSuperPopulation;
  std::uint64_t seed = 20240601;
  bool parallel = true;
};

/// Empirical quantile plus an order-statistic-spacing standard error.
TruthEntry quantile_with_se(std::vector<double> sample, double q);

/// Entries for every (policy, t, q) combination, policies outermost.
std::vector<TruthEntry> truth_table(const DgpSpec& spec, std::span<const PolicySpec> policies,
                                    std::span<const EstimandKind> ts, std::span<const double> qs,
                                    const TruthOptions& options = {});

TruthEntry truth_oracle(const DgpSpec& spec, const PolicySpec& policy, EstimandKind t, double q,
                        long n_super = kDefaultSuperPopulation, std::uint64_t seed = 20240601);

struct CdfEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// The averaged representation: mean over clusters of
/// (1/M) sum_j sum_a w_j(a) P(Y_j(a) <= theta | X), with the policy table
/// built exactly from the copula. Slow; used to cross-check the sampler.
std::vector<CdfEstimate> averaged_cdf(const DgpSpec& spec, const PolicySpec& policy,
                                      EstimandKind t, std::span<const double> thetas,
                                      long clusters, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Monte Carlo replication

struct EstimandSpec {
  PolicySpec policy;
  EstimandKind t = EstimandKind::Star;
  double q = 0.5;
  friend bool operator==(const EstimandSpec&, const EstimandSpec&) = default;
};

struct ReplicateConfig {
  DgpSpec dgp;
  int replicates = 200;
  std::vector<EstimandSpec> estimands;
  EstimatorOptions estimator;
  bool with_ipw = true;
  double alpha = 0.05;
  TruthOptions truth;
  std::uint64_t seed = 1;
};

// Replicates with more than this share of failures are marked invalid.
inline constexpr double kMaxFailureShare = 0.02;

struct ReplicateRow {
  std::string estimator;  // "np" or "ipw"
  EstimandSpec estimand;
  double truth = 0.0;
  double truth_se = 0.0;
  double bias = 0.0;
  double mcsd = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  // percent
  double rmse_ratio = 0.0;  // np / ipw, NaN when IPW was not run
  int failures = 0;
  int replicates = 0;
  bool valid = true;
  std::uint64_t seed = 0;
};

struct ReplicateDraw {
  double theta = 0.0;
  double se = 0.0;
  bool ok = false;
  std::string error;
};

struct ReplicateResult {
  std::vector<ReplicateRow> rows;
  std::vector<TruthEntry> truths;
  // draws[r][k]: replicate r, estimand k; ipw_draws empty when IPW is off
  std::vector<std::vector<ReplicateDraw>> np_draws, ipw_draws;
};

/// Truth per estimand; one super-population per distinct policy.
std::vector<TruthEntry> truths_for(const DgpSpec& spec, std::span<const EstimandSpec> estimands,
                                   const TruthOptions& options);

/// Seed of replicate r's study.
std::uint64_t replicate_seed(std::uint64_t seed, int r);

/// Runs the study. Truths are computed unless supplied (one per estimand, in order).
ReplicateResult replicate(const ReplicateConfig& config,
                          const std::vector<TruthEntry>* truths = nullptr);

}  // namespace nqce
