#include "config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "nqce/errors.hpp"

namespace nqce::cli {

namespace {

Json learner_defaults(const std::string& name) {
  const LearnerSpec d;
  return Json{{"name", name},        {"ridge", d.ridge},
              {"max_iter", d.max_iter}, {"tol", d.tol},
              {"rounds", d.rounds},    {"learning_rate", d.learning_rate},
              {"max_bins", d.max_bins}, {"lambda", d.lambda}};
}

const Json& estimand_template() {
  static const Json t = {{"policy", "CPS"}, {"parameter", 1.0}, {"t", "star"}, {"q", 0.5}};
  return t;
}

const Json& policy_template() {
  static const Json t = {{"policy", "CPS"}, {"parameter", 1.0}};
  return t;
}

const Json& effect_template() {
  static const Json t = {{"h", policy_template()}, {"h_prime", policy_template()}, {"q", 0.5}};
  return t;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void merge(Json& dst, const Json& src, const std::string& path);

// Array elements of these keys follow a template instead of the default value.
const Json* element_template(const std::string& path) {
  if (path == "estimands") return &estimand_template();
  if (path == "effects") return &effect_template();
  return nullptr;
}

void merge_value(Json& dst, const Json& src, const std::string& path) {
  if (dst.is_object()) {
    if (!src.is_object()) fail(ErrorKind::Config, "'" + path + "' must be an object");
    merge(dst, src, path);
    return;
  }
  if (dst.is_null()) {
    if (!src.is_null() && !src.is_number())
      fail(ErrorKind::Config, "'" + path + "' must be a number or null");
    dst = src;
    return;
  }
  if (dst.is_array()) {
    if (!src.is_array()) fail(ErrorKind::Config, "'" + path + "' must be an array");
    if (const Json* tmpl = element_template(path)) {
      Json out = Json::array();
      for (std::size_t k = 0; k < src.size(); ++k) {
        Json item = *tmpl;
        merge_value(item, src[k], path + "[" + std::to_string(k) + "]");
        out.push_back(item);
      }
      dst = out;
      return;
    }
    for (const auto& v : src)
      if (!v.is_number()) fail(ErrorKind::Config, "'" + path + "' must hold numbers");
    dst = src;
    return;
  }
  if (dst.is_boolean() && !src.is_boolean())
    fail(ErrorKind::Config, "'" + path + "' must be true or false");
  if (dst.is_string() && !src.is_string())
    fail(ErrorKind::Config, "'" + path + "' must be a string");
  if (dst.is_number_integer() && !src.is_number_integer())
    fail(ErrorKind::Config, "'" + path + "' must be an integer");
  if (dst.is_number_float() && !src.is_number())
    fail(ErrorKind::Config, "'" + path + "' must be a number");
  dst = src;
}

void merge(Json& dst, const Json& src, const std::string& path) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    const auto key = join(path, it.key());
    if (!dst.contains(it.key())) fail(ErrorKind::Config, "unknown config key '" + key + "'");
    merge_value(dst[it.key()], it.value(), key);
  }
}

template <class T>
T get(const Json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "bad value for '" + join(where, key) + "'");
  }
}

LearnerSpec learner_from_json(const Json& j, const std::string& where) {
  LearnerSpec s;
  s.name = get<std::string>(j, "name", where);
  if (s.name != "logistic" && s.name != "boosting")
    fail(ErrorKind::Config, "'" + join(where, "name") + "' must be logistic or boosting");
  s.ridge = get<double>(j, "ridge", where);
  s.max_iter = get<int>(j, "max_iter", where);
  s.tol = get<double>(j, "tol", where);
  s.rounds = get<int>(j, "rounds", where);
  s.learning_rate = get<double>(j, "learning_rate", where);
  s.max_bins = get<int>(j, "max_bins", where);
  s.lambda = get<double>(j, "lambda", where);
  return s;
}

template <std::size_t N>
std::array<double, N> coef_array(const Json& j, const char* key) {
  const auto v = get<std::vector<double>>(j, key, "dgp");
  if (v.size() != N)
    fail(ErrorKind::Config, "'dgp." + std::string(key) + "' needs " + std::to_string(N) + " values");
  std::array<double, N> out;
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

EstimandKind estimand_kind(const Json& j, const std::string& where) {
  const auto s = get<std::string>(j, "t", where);
  try {
    return estimand_from_string(s);
  } catch (const Error&) {
    fail(ErrorKind::Config, "'" + join(where, "t") + "' must be star, 0 or 1, got '" + s + "'");
  }
}

}  // namespace

const Json& default_config() {
  static const Json d = [] {
    const DgpSpec dgp;
    const EstimatorOptions est;
    const BandOptions band;
    const TruthOptions truth;
    Json j;
    j["seed"] = 1;
    j["output_dir"] = "nqce_out";
    j["input"] = "";
    j["threads"] = 0;
    j["dgp"] = {{"n", dgp.n},
                {"min_size", dgp.min_size},
                {"max_size", dgp.max_size},
                {"treatment_coef", dgp.treatment_coef},
                {"rho_a", dgp.rho_a},
                {"outcome_coef", dgp.outcome_coef},
                {"rho_y", dgp.rho_y},
                {"outcome_scale", to_string(dgp.outcome_scale)},
                {"scenario", to_string(dgp.scenario)},
                {"seed", nullptr}};
    j["estimands"] = Json::array({estimand_template()});
    j["effects"] = Json::array();
    j["estimator"] = {{"folds", est.folds},
                      {"epsilon", est.epsilon},
                      {"kernel", "normal"},
                      {"bandwidth", nullptr},
                      {"truncate", est.eif.weights.truncate},
                      {"truncation_cap", est.eif.weights.cap},
                      {"literal_eta_pairing", est.eif.literal_eta_pairing},
                      {"ee_tol", est.ee_tol},
                      {"ipw", true},
                      {"features", "covariates"},
                      {"ipw_bootstrap", est.ipw_bootstrap}};
    j["propensity"] = {{"learner", learner_defaults("logistic")},
                       {"quadrature_nodes", est.propensity.quadrature_nodes},
                       {"fixed_rho", nullptr}};
    j["outcome"] = {{"learner", learner_defaults("logistic")}};
    j["inference"] = {{"alpha", band.alpha},
                      {"draws", band.draws},
                      {"multiplier", "rademacher"},
                      {"seed", nullptr}};
    j["band"] = {{"axis", "q"},
                 {"t", "star"},
                 {"policy", "CPS"},
                 {"parameter", 1.0},
                 {"q", 0.5},
                 {"grid", std::vector<double>{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}},
                 {"delta_lo", 0.5},
                 {"delta_hi", 2.0},
                 {"effect", ""},
                 {"h_prime", policy_template()}};
    j["truth"] = {{"n_super", truth.n_super}, {"seed", truth.seed}};
    j["replicate"] = {{"replicates", 200}};
    return j;
  }();
  return d;
}

void apply_set(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::Config, "--set expects key=value, got '" + assignment + "'");
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const std::exception&) {
    value = text;
  }
  // nest a.b.c into {"a": {"b": {"c": value}}} and merge like a file
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  Json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  merge(config, patch, "");
}

Json resolve_config(const Json& file, const std::vector<std::string>& sets) {
  Json cfg = default_config();
  if (!file.is_null()) {
    if (!file.is_object()) fail(ErrorKind::Config, "config file must hold a JSON object");
    merge(cfg, file, "");
  }
  for (const auto& s : sets) apply_set(cfg, s);
  return cfg;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const Json& resolved) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(resolved.dump())));
  return buf;
}

PolicySpec policy_from_json(const Json& j, const std::string& where) {
  PolicySpec p;
  const auto name = get<std::string>(j, "policy", where);
  try {
    p.kind = policy_kind_from_string(name);
  } catch (const Error&) {
    fail(ErrorKind::Config, "'" + join(where, "policy") + "' must be DAP, UAP, IPS or CPS");
  }
  p.parameter = get<double>(j, "parameter", where);
  try {
    p.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, "'" + where + "': " + e.what());
  }
  return p;
}

RunConfig typed_config(const Json& j) {
  RunConfig c;
  c.hash = config_hash(j);
  c.seed = get<std::uint64_t>(j, "seed", "");
  c.output_dir = get<std::string>(j, "output_dir", "");
  c.input = get<std::string>(j, "input", "");
  c.threads = get<int>(j, "threads", "");
  if (c.threads < 0) fail(ErrorKind::Config, "'threads' must be >= 0");

  const auto& d = j.at("dgp");
  c.dgp.n = get<int>(d, "n", "dgp");
  c.dgp.min_size = get<int>(d, "min_size", "dgp");
  c.dgp.max_size = get<int>(d, "max_size", "dgp");
  c.dgp.treatment_coef = coef_array<4>(d, "treatment_coef");
  c.dgp.rho_a = get<double>(d, "rho_a", "dgp");
  c.dgp.outcome_coef = coef_array<6>(d, "outcome_coef");
  c.dgp.rho_y = get<double>(d, "rho_y", "dgp");
  try {
    c.dgp.outcome_scale = outcome_scale_from_string(get<std::string>(d, "outcome_scale", "dgp"));
    c.dgp.scenario = scenario_from_string(get<std::string>(d, "scenario", "dgp"));
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("dgp: ") + e.what());
  }
  c.dgp.seed = d.at("seed").is_null() ? c.seed : d.at("seed").get<std::uint64_t>();
  try {
    c.dgp.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("dgp: ") + e.what());
  }

  const auto& est = j.at("estimator");
  auto& o = c.estimator;
  o.folds = get<int>(est, "folds", "estimator");
  o.epsilon = get<double>(est, "epsilon", "estimator");
  const auto kernel = get<std::string>(est, "kernel", "estimator");
  if (kernel != "normal" && kernel != "logistic")
    fail(ErrorKind::Config, "'estimator.kernel' must be normal or logistic");
  o.kernel = kernel == "normal" ? KernelKind::Normal : KernelKind::Logistic;
  if (!est.at("bandwidth").is_null()) {
    o.bandwidth = est.at("bandwidth").get<double>();
    if (!(*o.bandwidth > 0.0)) fail(ErrorKind::Config, "'estimator.bandwidth' must be positive");
  }
  o.eif.weights.truncate = get<bool>(est, "truncate", "estimator");
  o.eif.weights.cap = get<double>(est, "truncation_cap", "estimator");
  o.eif.literal_eta_pairing = get<bool>(est, "literal_eta_pairing", "estimator");
  o.ee_tol = get<double>(est, "ee_tol", "estimator");
  c.with_ipw = get<bool>(est, "ipw", "estimator");
  const auto features = get<std::string>(est, "features", "estimator");
  if (features != "covariates" && features != "transformed")
    fail(ErrorKind::Config, "'estimator.features' must be covariates or transformed");
  c.transformed_features = features == "transformed";
  o.ipw_bootstrap = get<int>(est, "ipw_bootstrap", "estimator");
  if (o.folds < 2) fail(ErrorKind::Config, "'estimator.folds' must be at least 2");
  if (!(o.epsilon > 0.0 && o.epsilon < 0.5))
    fail(ErrorKind::Config, "'estimator.epsilon' must lie in (0, 0.5)");
  if (o.ipw_bootstrap < 0) fail(ErrorKind::Config, "'estimator.ipw_bootstrap' must be >= 0");

  const auto& ps = j.at("propensity");
  o.propensity.learner = learner_from_json(ps.at("learner"), "propensity.learner");
  o.propensity.quadrature_nodes = get<int>(ps, "quadrature_nodes", "propensity");
  if (o.propensity.quadrature_nodes < 16)
    fail(ErrorKind::Config, "'propensity.quadrature_nodes' must be at least 16");
  if (!ps.at("fixed_rho").is_null()) o.propensity.fixed_rho = ps.at("fixed_rho").get<double>();
  o.outcome_learner = learner_from_json(j.at("outcome").at("learner"), "outcome.learner");

  const auto& estimands = j.at("estimands");
  for (std::size_t k = 0; k < estimands.size(); ++k) {
    const auto where = "estimands[" + std::to_string(k) + "]";
    const auto& e = estimands[k];
    EstimandSpec s{policy_from_json(e, where), estimand_kind(e, where), get<double>(e, "q", where)};
    if (!(s.q >= o.epsilon && s.q <= 1.0 - o.epsilon))
      fail(ErrorKind::Config, "'" + where + ".q' outside [epsilon, 1 - epsilon]");
    if (std::find(c.estimands.begin(), c.estimands.end(), s) != c.estimands.end()) {
      c.warnings.push_back("duplicate estimand " + where + " dropped");
      continue;
    }
    c.estimands.push_back(s);
  }
  const auto& effects = j.at("effects");
  for (std::size_t k = 0; k < effects.size(); ++k) {
    const auto where = "effects[" + std::to_string(k) + "]";
    const auto& e = effects[k];
    c.effects.push_back({policy_from_json(e.at("h"), where + ".h"),
                         policy_from_json(e.at("h_prime"), where + ".h_prime"),
                         get<double>(e, "q", where)});
  }

  const auto& inf = j.at("inference");
  c.inference.alpha = get<double>(inf, "alpha", "inference");
  c.inference.draws = get<int>(inf, "draws", "inference");
  const auto mult = get<std::string>(inf, "multiplier", "inference");
  if (mult != "rademacher" && mult != "gaussian")
    fail(ErrorKind::Config, "'inference.multiplier' must be rademacher or gaussian");
  c.inference.multiplier =
      mult == "rademacher" ? kernels::Multiplier::Rademacher : kernels::Multiplier::Gaussian;
  c.inference.seed =
      inf.at("seed").is_null() ? mix_seed(c.seed, 0xBA4D) : inf.at("seed").get<std::uint64_t>();
  if (!(c.inference.alpha > 0.0 && c.inference.alpha < 1.0))
    fail(ErrorKind::Config, "'inference.alpha' must lie in (0, 1)");
  if (c.inference.draws < kMinBootstrapDraws)
    fail(ErrorKind::Config, "'inference.draws' must be at least " +
                                std::to_string(kMinBootstrapDraws));

  const auto& b = j.at("band");
  c.band.axis = get<std::string>(b, "axis", "band");
  if (c.band.axis != "q" && c.band.axis != "delta")
    fail(ErrorKind::Config, "'band.axis' must be q or delta");
  c.band.t = estimand_kind(b, "band");
  c.band.policy = policy_from_json(b, "band");
  c.band.q = get<double>(b, "q", "band");
  c.band.grid = get<std::vector<double>>(b, "grid", "band");
  c.band.range = {get<double>(b, "delta_lo", "band"), get<double>(b, "delta_hi", "band")};
  c.band.effect = get<std::string>(b, "effect", "band");
  c.band.h_prime = policy_from_json(b.at("h_prime"), "band.h_prime");
  if (!c.band.effect.empty() && c.band.axis != "q")
    fail(ErrorKind::Config, "effect bands are only available over q");

  const auto& tr = j.at("truth");
  c.truth.n_super = get<long>(tr, "n_super", "truth");
  c.truth.seed = get<std::uint64_t>(tr, "seed", "truth");
  if (c.truth.n_super < kMinSuperPopulation)
    fail(ErrorKind::Config, "'truth.n_super' must be at least " +
                                std::to_string(kMinSuperPopulation));
  c.replicates = get<int>(j.at("replicate"), "replicates", "replicate");
  if (c.replicates < 2) fail(ErrorKind::Config, "'replicate.replicates' must be at least 2");
  return c;
}

}  // namespace nqce::cli
