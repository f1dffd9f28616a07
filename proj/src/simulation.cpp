#include "nqce/simulation.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "nqce/errors.hpp"
#include "nqce/inference.hpp"
#include "nqce/kernels.hpp"
#include "nqce/numerics.hpp"
#include "nqce/nuisance.hpp"

namespace nqce {

const char* to_string(Scenario s) { return s == Scenario::A ? "A" : "B"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "A" || s == "a") return Scenario::A;
  if (s == "B" || s == "b") return Scenario::B;
  fail(ErrorKind::Config, "scenario must be A or B, got '" + s + "'");
}

const char* to_string(OutcomeScale s) { return s == OutcomeScale::StdDev ? "sd" : "variance"; }

OutcomeScale outcome_scale_from_string(const std::string& s) {
  if (s == "sd") return OutcomeScale::StdDev;
  if (s == "variance") return OutcomeScale::Variance;
  fail(ErrorKind::Config, "outcome_scale must be sd or variance, got '" + s + "'");
}

double outcome_sd(const DgpSpec& spec, int own) {
  if (spec.outcome_scale == OutcomeScale::StdDev) return own ? 2.0 : 1.0;
  return own ? std::sqrt(2.0) : 1.0;
}

void DgpSpec::validate() const {
  if (n < 1) fail(ErrorKind::Argument, "dgp.n must be positive");
  if (min_size < 1 || max_size < min_size || max_size > kDefaultMaxClusterSize)
    fail(ErrorKind::Argument, "cluster sizes must satisfy 1 <= min_size <= max_size <= " +
                                  std::to_string(kDefaultMaxClusterSize));
  const auto [lo_a, hi_a] = admissible_rho(max_size);
  if (!(rho_a >= lo_a && rho_a <= hi_a))
    fail(ErrorKind::Argument, "dgp.rho_a outside the admissible copula range");
  if (!(rho_y >= 0.0 && rho_y < 1.0)) fail(ErrorKind::Argument, "dgp.rho_y must lie in [0, 1)");
  for (double c : treatment_coef)
    if (!std::isfinite(c)) fail(ErrorKind::Argument, "non-finite treatment coefficient");
  for (double c : outcome_coef)
    if (!std::isfinite(c)) fail(ErrorKind::Argument, "non-finite outcome coefficient");
}

std::vector<std::string> DgpSpec::overrides() const {
  const DgpSpec d;
  std::vector<std::string> out;
  if (min_size != d.min_size || max_size != d.max_size) out.push_back("cluster_sizes");
  if (treatment_coef != d.treatment_coef) out.push_back("treatment_coef");
  if (rho_a != d.rho_a) out.push_back("rho_a");
  if (outcome_coef != d.outcome_coef) out.push_back("outcome_coef");
  if (rho_y != d.rho_y) out.push_back("rho_y");
  if (outcome_scale != d.outcome_scale) out.push_back("outcome_scale");
  return out;
}

double true_margin(const DgpSpec& spec, std::span<const double> x) {
  const auto& c = spec.treatment_coef;
  return expit(c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2]);
}

std::vector<double> true_margins(const DgpSpec& spec, const Matrix& covariates) {
  std::vector<double> p(covariates.rows());
  for (Eigen::Index j = 0; j < covariates.rows(); ++j)
    p[j] = true_margin(spec, {covariates.row(j).data(), 3});
  return p;
}

double outcome_mean(const DgpSpec& spec, const TreatmentVector& a, int j, const Matrix& x) {
  const int m = static_cast<int>(a.size());
  int peers = 0;
  for (int r = 0; r < m; ++r)
    if (r != j) peers += a[r];
  const double peer_mean = m > 1 ? double(peers) / (m - 1) : 0.0;
  const auto& b = spec.outcome_coef;
  return b[0] + b[1] * a[j] + b[2] * peer_mean + b[3] * x(j, 0) + b[4] * x(j, 1) + b[5] * x(j, 2);
}

Matrix transformed_features(const Matrix& covariates) {
  Matrix f(covariates.rows(), 3);
  for (Eigen::Index j = 0; j < covariates.rows(); ++j) {
    const double x1 = covariates(j, 0), x2 = covariates(j, 1);
    f(j, 0) = std::exp(-0.5 * x1);
    f(j, 1) = x1 / (1.0 + 0.5 * x2);
    f(j, 2) = covariates(j, 2);
  }
  return f;
}

namespace {

using Rng = std::mt19937_64;

struct Draws {
  Rng rng;
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  explicit Draws(std::uint64_t seed) : rng(seed) {}
  double normal() { return z(rng); }
  double uniform() { return u(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
};

Matrix draw_covariates(int m, Draws& d) {
  Matrix x(m, kDgpCovariates);
  for (int j = 0; j < m; ++j) {
    x(j, 0) = d.normal();
    x(j, 1) = d.normal();
    x(j, 2) = d.uniform() < 0.5 ? 1.0 : 0.0;
  }
  return x;
}

// a_j = 1{sqrt(rho) F + sqrt(1-rho) E_j > Phi^{-1}(1 - p_j)}
void draw_copula_treatments(std::span<const double> cut, double rho, Draws& d,
                            TreatmentVector& a) {
  const double f = std::sqrt(rho) * d.normal();
  const double s = std::sqrt(1.0 - rho);
  for (std::size_t j = 0; j < cut.size(); ++j) a[j] = (f + s * d.normal()) > cut[j];
}

std::vector<double> cuts(std::span<const double> p) {
  std::vector<double> c(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) c[j] = normal_quantile(1.0 - p[j]);
  return c;
}

void draw_policy(const PolicySpec& policy, std::span<const double> p, double rho, Draws& d,
                 TreatmentVector& a) {
  const int m = static_cast<int>(p.size());
  switch (policy.kind) {
    case PolicyKind::DAP:
      std::fill(a.begin(), a.end(), std::uint8_t(policy.parameter != 0.0));
      return;
    case PolicyKind::UAP:
      for (auto& v : a) v = d.uniform() < policy.parameter;
      return;
    case PolicyKind::IPS: {
      const double delta = policy.parameter;
      for (int j = 0; j < m; ++j) a[j] = d.uniform() < delta * p[j] / (1.0 - p[j] + delta * p[j]);
      return;
    }
    case PolicyKind::CPS: {
      // H(a) is proportional to delta^{s(a)} pi(a): accept a copula draw with
      // probability delta^{s - M} (delta > 1) or delta^s (delta < 1).
      const double delta = policy.parameter;
      const auto c = cuts(p);
      for (;;) {
        draw_copula_treatments(c, rho, d, a);
        if (delta == 1.0) return;
        int s = 0;
        for (auto v : a) s += v;
        const double accept = delta > 1.0 ? std::pow(delta, s - m) : std::pow(delta, s);
        if (d.uniform() < accept) return;
      }
    }
  }
}

void sample_block(const DgpSpec& spec, const PolicySpec& policy, long begin, long end,
                  std::uint64_t seed, TruthSamples& out) {
  Draws d(seed);
  TreatmentVector a, fixed;
  for (long i = begin; i < end; ++i) {
    const int m = d.integer(spec.min_size, spec.max_size);
    const Matrix x = draw_covariates(m, d);
    const auto p = true_margins(spec, x);
    a.assign(m, 0);
    draw_policy(policy, p, spec.rho_a, d, a);
    const int j = d.integer(0, m - 1);
    const double z = d.normal();
    out.star[i] = outcome_mean(spec, a, j, x) + outcome_sd(spec, a[j]) * z;
    fixed = a;
    fixed[j] = 0;
    out.fix0[i] = outcome_mean(spec, fixed, j, x) + outcome_sd(spec, 0) * z;
    fixed[j] = 1;
    out.fix1[i] = outcome_mean(spec, fixed, j, x) + outcome_sd(spec, 1) * z;
  }
}

TruthSamples allocate(const DgpSpec& spec, const PolicySpec& policy, long n_super) {
  spec.validate();
  policy.validate();
  if (n_super < kMinSuperPopulation)
    fail(ErrorKind::Argument, "super-population needs at least " +
                                  std::to_string(kMinSuperPopulation) + " clusters");
  TruthSamples s;
  s.star.resize(n_super);
  s.fix0.resize(n_super);
  s.fix1.resize(n_super);
  return s;
}

}  // namespace

Dataset generate_study(const DgpSpec& spec) {
  spec.validate();
  std::vector<ClusterRecord> clusters(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    Draws d(mix_seed(spec.seed, std::uint64_t(i)));
    auto& c = clusters[i];
    const int m = d.integer(spec.min_size, spec.max_size);
    c.cluster_id = "c" + std::to_string(i + 1);
    c.covariates = draw_covariates(m, d);
    c.treatments.assign(m, 0);
    draw_copula_treatments(cuts(true_margins(spec, c.covariates)), spec.rho_a, d, c.treatments);
    const double g = std::sqrt(spec.rho_y) * d.normal();
    const double s = std::sqrt(1.0 - spec.rho_y);
    c.outcomes.resize(m);
    for (int j = 0; j < m; ++j)
      c.outcomes[j] = outcome_mean(spec, c.treatments, j, c.covariates) +
                      outcome_sd(spec, c.treatments[j]) * (g + s * d.normal());
    if (spec.scenario == Scenario::B) c.features = transformed_features(c.covariates);
  }
  return require_valid(std::move(clusters), {"X1", "X2", "X3"});
}

const std::vector<double>& TruthSamples::of(EstimandKind t) const {
  switch (t) {
    case EstimandKind::Star: return star;
    case EstimandKind::Fix0: return fix0;
    case EstimandKind::Fix1: return fix1;
  }
  return star;
}

TruthSamples truth_samples_serial(const DgpSpec& spec, const PolicySpec& policy, long n_super,
                                  std::uint64_t seed) {
  auto s = allocate(spec, policy, n_super);
  const long blocks = (n_super + kTruthBlock - 1) / kTruthBlock;
  for (long b = 0; b < blocks; ++b)
    sample_block(spec, policy, b * kTruthBlock, std::min(n_super, (b + 1) * kTruthBlock),
                 mix_seed(seed, std::uint64_t(b)), s);
  return s;
}

TruthSamples truth_samples_omp(const DgpSpec& spec, const PolicySpec& policy, long n_super,
                               std::uint64_t seed) {
  auto s = allocate(spec, policy, n_super);
  const long blocks = (n_super + kTruthBlock - 1) / kTruthBlock;
#pragma omp parallel for schedule(dynamic)
  for (long b = 0; b < blocks; ++b)
    sample_block(spec, policy, b * kTruthBlock, std::min(n_super, (b + 1) * kTruthBlock),
                 mix_seed(seed, std::uint64_t(b)), s);
  return s;
}

TruthEntry quantile_with_se(std::vector<double> sample, double q) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::Argument, "q must lie in (0, 1)");
  if (sample.size() < 3) fail(ErrorKind::Argument, "sample too small for a quantile");
  std::sort(sample.begin(), sample.end());
  const long n = static_cast<long>(sample.size());
  const long k = std::clamp<long>(static_cast<long>(std::ceil(q * double(n))), 1, n) - 1;
  const long d = std::max<long>(1, std::lround(std::sqrt(double(n))));
  const long lo = std::max<long>(0, k - d), hi = std::min<long>(n - 1, k + d);
  TruthEntry e;
  e.q = q;
  e.value = sample[k];
  // 1/f estimated from the spacing of order statistics around k
  const double inv_density = (sample[hi] - sample[lo]) * double(n) / double(hi - lo);
  e.mc_se = std::sqrt(q * (1.0 - q) / double(n)) * inv_density;
  e.n_super = n;
  return e;
}

std::vector<TruthEntry> truth_table(const DgpSpec& spec, std::span<const PolicySpec> policies,
                                    std::span<const EstimandKind> ts, std::span<const double> qs,
                                    const TruthOptions& options) {
  std::vector<TruthEntry> out;
  for (const auto& policy : policies) {
    const auto s = options.parallel
                       ? truth_samples_omp(spec, policy, options.n_super, options.seed)
                       : truth_samples_serial(spec, policy, options.n_super, options.seed);
    for (auto t : ts)
      for (double q : qs) {
        auto e = quantile_with_se(s.of(t), q);
        e.policy = policy;
        e.t = t;
        e.seed = options.seed;
        out.push_back(e);
      }
  }
  return out;
}

TruthEntry truth_oracle(const DgpSpec& spec, const PolicySpec& policy, EstimandKind t, double q,
                        long n_super, std::uint64_t seed) {
  TruthOptions o;
  o.n_super = n_super;
  o.seed = seed;
  const PolicySpec ps[] = {policy};
  const EstimandKind tt[] = {t};
  const double qq[] = {q};
  return truth_table(spec, ps, tt, qq, o).front();
}

std::vector<CdfEstimate> averaged_cdf(const DgpSpec& spec, const PolicySpec& policy,
                                      EstimandKind t, std::span<const double> thetas,
                                      long clusters, std::uint64_t seed) {
  spec.validate();
  policy.validate();
  if (clusters < 2) fail(ErrorKind::Argument, "need at least two clusters");
  std::vector<std::vector<double>> per(thetas.size(), std::vector<double>(clusters));
  const long blocks = (clusters + kTruthBlock - 1) / kTruthBlock;
#pragma omp parallel for schedule(dynamic)
  for (long b = 0; b < blocks; ++b) {
    Draws d(mix_seed(seed, std::uint64_t(b)));
    for (long i = b * kTruthBlock; i < std::min(clusters, (b + 1) * kTruthBlock); ++i) {
      const int m = d.integer(spec.min_size, spec.max_size);
      const Matrix x = draw_covariates(m, d);
      const PolicyTable table(policy, cluster_ps_view(true_margins(spec, x), spec.rho_a));
      const auto vectors = enumerate_treatment_vectors(m);
      for (std::size_t k = 0; k < thetas.size(); ++k) {
        double f = 0.0;
        for (int j = 0; j < m; ++j)
          for (std::size_t idx = 0; idx < vectors.size(); ++idx) {
            const double w = table.weight(t, j, idx);
            if (w == 0.0) continue;
            const auto& a = vectors[idx];
            f += w * normal_cdf((thetas[k] - outcome_mean(spec, a, j, x)) / outcome_sd(spec, a[j]));
          }
        per[k][i] = f / m;
      }
    }
  }
  std::vector<CdfEstimate> out;
  for (const auto& v : per) {
    const double mean = kernels::ordered_mean(v);
    out.push_back({mean, sample_sd(v) / std::sqrt(double(clusters))});
  }
  return out;
}

std::vector<TruthEntry> truths_for(const DgpSpec& spec, std::span<const EstimandSpec> estimands,
                                   const TruthOptions& options) {
  std::vector<TruthEntry> out(estimands.size());
  std::vector<PolicySpec> done;
  for (std::size_t k = 0; k < estimands.size(); ++k) {
    const auto& policy = estimands[k].policy;
    if (std::find(done.begin(), done.end(), policy) != done.end()) continue;
    done.push_back(policy);
    const auto s = options.parallel
                       ? truth_samples_omp(spec, policy, options.n_super, options.seed)
                       : truth_samples_serial(spec, policy, options.n_super, options.seed);
    for (std::size_t r = k; r < estimands.size(); ++r) {
      const auto& e = estimands[r];
      if (!(e.policy == policy)) continue;
      out[r] = quantile_with_se(s.of(e.t), e.q);
      out[r].policy = policy;
      out[r].t = e.t;
      out[r].seed = options.seed;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t replicate_seed(std::uint64_t seed, int r) { return mix_seed(seed, std::uint64_t(r)); }

namespace {

ReplicateDraw draw_from(const QuantileEstimate& e) {
  return {e.theta_hat, e.standard_error(), true, {}};
}

ReplicateRow summarize(const std::string& name, const EstimandSpec& spec, const TruthEntry& truth,
                       const std::vector<std::vector<ReplicateDraw>>& draws, std::size_t k,
                       double z, std::uint64_t seed) {
  ReplicateRow row;
  row.estimator = name;
  row.estimand = spec;
  row.truth = truth.value;
  row.truth_se = truth.mc_se;
  row.replicates = static_cast<int>(draws.size());
  row.seed = seed;
  std::vector<double> est;
  int covered = 0;
  for (const auto& rep : draws) {
    const auto& d = rep[k];
    if (!d.ok) {
      ++row.failures;
      continue;
    }
    est.push_back(d.theta);
    if (std::abs(d.theta - truth.value) <= z * d.se) ++covered;
  }
  row.valid = row.failures <= kMaxFailureShare * row.replicates;
  if (est.empty()) {
    row.bias = row.mcsd = row.rmse = row.coverage = NAN;
    return row;
  }
  double se2 = 0.0;
  for (double v : est) se2 += (v - truth.value) * (v - truth.value);
  row.bias = kernels::ordered_mean(est) - truth.value;
  row.mcsd = est.size() > 1 ? sample_sd(est) : 0.0;
  row.rmse = std::sqrt(se2 / double(est.size()));
  row.coverage = 100.0 * covered / double(est.size());
  row.rmse_ratio = NAN;
  return row;
}

}  // namespace

ReplicateResult replicate(const ReplicateConfig& config, const std::vector<TruthEntry>* truths) {
  if (config.replicates < 2) fail(ErrorKind::Argument, "replicate needs R >= 2");
  if (config.estimands.empty()) fail(ErrorKind::Argument, "no estimands to replicate");
  config.dgp.validate();
  for (const auto& e : config.estimands) e.policy.validate();
  if (!(config.alpha > 0.0 && config.alpha < 1.0))
    fail(ErrorKind::Argument, "alpha must lie in (0, 1)");

  ReplicateResult res;
  if (truths) {
    if (truths->size() != config.estimands.size())
      fail(ErrorKind::Argument, "one truth per estimand required");
    res.truths = *truths;
  } else {
    res.truths = truths_for(config.dgp, config.estimands, config.truth);
  }

  const int R = config.replicates;
  const std::size_t K = config.estimands.size();
  res.np_draws.assign(R, std::vector<ReplicateDraw>(K));
  if (config.with_ipw) res.ipw_draws.assign(R, std::vector<ReplicateDraw>(K));

#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < R; ++r) {
    auto dgp = config.dgp;
    dgp.seed = replicate_seed(config.seed, r);
    auto record = [&](std::vector<ReplicateDraw>& row, std::size_t k, auto&& fn) {
      try {
        row[k] = draw_from(fn());
      } catch (const std::exception& e) {
        row[k].ok = false;
        row[k].error = e.what();
      }
    };
    try {
      const auto data = generate_study(dgp);
      const CrossFitEstimator est(data, config.estimator, mix_seed(dgp.seed, 0xE57));
      for (std::size_t k = 0; k < K; ++k) {
        const auto& e = config.estimands[k];
        record(res.np_draws[r], k, [&] { return est.np(e.t, e.q, e.policy); });
        if (config.with_ipw)
          record(res.ipw_draws[r], k, [&] { return est.ipw(e.t, e.q, e.policy); });
      }
    } catch (const std::exception& e) {
      for (std::size_t k = 0; k < K; ++k) {
        res.np_draws[r][k] = {0.0, 0.0, false, e.what()};
        if (config.with_ipw) res.ipw_draws[r][k] = {0.0, 0.0, false, e.what()};
      }
    }
  }

  const double z = normal_quantile(1.0 - config.alpha / 2.0);
  for (std::size_t k = 0; k < K; ++k) {
    auto np = summarize("np", config.estimands[k], res.truths[k], res.np_draws, k, z, config.seed);
    if (config.with_ipw) {
      auto ipw =
          summarize("ipw", config.estimands[k], res.truths[k], res.ipw_draws, k, z, config.seed);
      np.rmse_ratio = np.rmse / ipw.rmse;
      ipw.rmse_ratio = np.rmse_ratio;
      res.rows.push_back(ipw);
    }
    res.rows.push_back(np);
  }
  return res;
}

}  // namespace nqce
