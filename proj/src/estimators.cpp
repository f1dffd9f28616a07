#include "nqce/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace nqce {

void SmoothingSpec::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorKind::Argument, "bandwidth must be positive");
}

double bandwidth(const Dataset& data) {
  std::vector<double> y;
  for (const auto& c : data.clusters) y.insert(y.end(), c.outcomes.begin(), c.outcomes.end());
  if (y.size() < 2) fail(ErrorKind::Argument, "bandwidth needs at least two individuals");
  const double sd = sample_sd(y);
  if (!(sd > 0.0)) fail(ErrorKind::Degenerate, "outcomes have zero variance");
  return sd * std::pow(double(y.size()), -0.26);
}

double observed_propensity(const ClusterPropensityView& ps, std::size_t obs_idx,
                           const WeightOptions& opts, WeightCounters* counters) {
  const double p = ps.joint[obs_idx];
  if (opts.truncate && p < 1.0 / opts.cap) {
    if (counters) ++counters->truncated;
    return 1.0 / opts.cap;
  }
  if (!(p >= kPositivityFloor))
    fail(ErrorKind::Overlap, "cluster propensity of an observed vector is below 1e-12");
  return p;
}

double weighted_step_root(std::span<const double> y, std::span<const double> w, double q) {
  if (y.size() != w.size() || y.empty())
    fail(ErrorKind::Argument, "weighted quantile needs matching, non-empty inputs");
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  double total = 0.0;
  for (double v : w) {
    if (v < 0.0) fail(ErrorKind::Argument, "negative quantile weight");
    total += v;
  }
  if (!(total > 0.0)) fail(ErrorKind::Overlap, "total weight is zero");
  const double target = q * total;
  double cum = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double value = y[order[k]];
    while (k < order.size() && y[order[k]] == value) cum += w[order[k++]];
    if (cum >= target) return value;
  }
  return y[order.back()];
}

namespace {

struct WeightedSample {
  std::vector<double> y;
  std::vector<double> w;
  std::vector<int> cluster;  // position in the cluster list
};

WeightedSample ipw_sample(const Dataset& data, std::span<const int> clusters, EstimandKind t,
                          const PolicySpec& policy,
                          std::span<const ClusterPropensityView* const> views,
                          const WeightOptions& opts, WeightCounters* counters) {
  WeightedSample s;
  for (std::size_t pos = 0; pos < clusters.size(); ++pos) {
    const auto& c = data.clusters[clusters[pos]];
    const auto& ps = *views[clusters[pos]];
    const PolicyTable table(policy, ps);
    const auto obs = vector_index(c.treatments);
    const double pi_obs = observed_propensity(ps, obs, opts, counters);
    for (int j = 0; j < c.size(); ++j) {
      s.y.push_back(c.outcomes[j]);
      s.w.push_back(table.weight(t, j, obs) / (c.size() * pi_obs));
      s.cluster.push_back(static_cast<int>(pos));
    }
  }
  return s;
}

}  // namespace

double ipw_quantile(const Dataset& data, std::span<const int> clusters, EstimandKind t,
                    double q, const PolicySpec& policy,
                    std::span<const ClusterPropensityView* const> views,
                    const WeightOptions& opts, WeightCounters* counters) {
  policy.validate();
  if (clusters.empty()) fail(ErrorKind::Argument, "IPW quantile over an empty cluster set");
  const auto s = ipw_sample(data, clusters, t, policy, views, opts, counters);
  const double total = std::accumulate(s.w.begin(), s.w.end(), 0.0);
  if (!(total > 0.0))
    fail(ErrorKind::Overlap, "policy " + policy.label() + " puts zero weight on every observed " +
                                 "treatment vector for estimand " + to_string(t));
  return weighted_step_root(s.y, s.w, q);
}

// ---------------------------------------------------------------------------

ThresholdPredictions ThresholdPredictions::constant(int m, double value) {
  ThresholdPredictions p;
  p.m = m;
  p.values.assign(static_cast<std::size_t>(m) * 2 * m, value);
  return p;
}

ThresholdPredictions ThresholdPredictions::from_model(const ThresholdModel& model,
                                                      const ClusterRecord& c) {
  ThresholdPredictions p;
  p.m = c.size();
  p.values.resize(static_cast<std::size_t>(p.m) * 2 * p.m);
  for (int j = 0; j < p.m; ++j)
    for (int own = 0; own < 2; ++own)
      for (int k = 0; k < p.m; ++k)
        p.values[(static_cast<std::size_t>(j) * 2 + own) * p.m + k] = model.predict(c, j, own, k);
  return p;
}

ClusterScoreParts cluster_score_parts(const ClusterRecord& c, EstimandKind t, double q,
                                      const PolicySpec& policy, const ClusterPropensityView& ps,
                                      const ThresholdPredictions& mhat, const EifOptions& opts,
                                      WeightCounters* counters) {
  const int m = c.size();
  if (ps.m != m || mhat.m != m) fail(ErrorKind::Argument, "nuisance size differs from cluster size");
  const PolicyTable table(policy, ps);
  const auto obs = vector_index(c.treatments);
  const double pi_obs = observed_propensity(ps, obs, opts.weights, counters);

  ClusterScoreParts parts;
  parts.coef.resize(m);
  for (int j = 0; j < m; ++j) parts.coef[j] = table.weight(t, j, obs) / (m * pi_obs);

  const bool has_omega = policy.depends_on_propensity();
  const std::vector<double> row =
      has_omega ? table.omega_row(obs) : std::vector<double>(table.count(), 0.0);
  double eta = 0.0;
  for (int j = 0; j < m; ++j) {
    for (std::size_t idx = 0; idx < table.count(); ++idx) {
      const double w = table.weight(t, j, idx);
      const double om = has_omega ? table.omega_t(t, j, idx, row) : 0.0;
      if (w == 0.0 && om == 0.0) continue;
      const double aug = om + w - (idx == obs ? w / pi_obs : 0.0);
      const int own_bit = index_bit(idx, j, m);
      const int peers = std::popcount(idx) - own_bit;
      const int own = (t == EstimandKind::Star || opts.literal_eta_pairing) ? own_bit
                                                                             : fixed_treatment(t);
      eta += aug * (mhat(j, own, peers) - q);
    }
  }
  parts.eta = eta / m;
  return parts;
}

EifTerms eif_terms(const ClusterRecord& c, double theta, double q, EstimandKind t,
                   const PolicySpec& policy, const ClusterPropensityView& ps,
                   const ThresholdPredictions& mhat, const SmoothingSpec& smoothing,
                   const EifOptions& opts) {
  smoothing.validate();
  const auto parts = cluster_score_parts(c, t, q, policy, ps, mhat, opts);
  EifTerms out;
  for (int j = 0; j < c.size(); ++j)
    out.psi_part +=
        parts.coef[j] * (smoothing.kernel.cdf((theta - c.outcomes[j]) / smoothing.h) - q);
  out.eta_part = parts.eta;
  return out;
}

// ---------------------------------------------------------------------------

SmoothedEstimatingEquation::SmoothedEstimatingEquation(kernels::ScoreBlocks blocks, double q,
                                                       SmoothingSpec smoothing)
    : blocks_(std::move(blocks)), q_(q), smoothing_(smoothing) {
  smoothing_.validate();
  if (blocks_.n() == 0) fail(ErrorKind::Argument, "estimating equation over zero clusters");
}

SmoothedEstimatingEquation SmoothedEstimatingEquation::build(
    const Dataset& data, std::span<const int> clusters, EstimandKind t, double q,
    const PolicySpec& policy, std::span<const ClusterPropensityView* const> views,
    std::span<const ThresholdPredictions> mhat, const SmoothingSpec& smoothing,
    const EifOptions& opts, WeightCounters* counters) {
  policy.validate();
  kernels::ScoreBlocks blocks;
  for (int i : clusters) {
    const auto& c = data.clusters[i];
    const auto parts = cluster_score_parts(c, t, q, policy, *views[i], mhat[i], opts, counters);
    blocks.y.insert(blocks.y.end(), c.outcomes.begin(), c.outcomes.end());
    blocks.coef.insert(blocks.coef.end(), parts.coef.begin(), parts.coef.end());
    blocks.eta.push_back(parts.eta);
    blocks.offsets.push_back(blocks.y.size());
  }
  return SmoothedEstimatingEquation(std::move(blocks), q, smoothing);
}

std::vector<double> SmoothedEstimatingEquation::cluster_scores(double theta) const {
  std::vector<double> out(blocks_.n());
  kernels::cluster_scores_omp(blocks_, theta, q_, smoothing_.h, smoothing_.kernel, out);
  return out;
}

double SmoothedEstimatingEquation::value(double theta) const {
  return kernels::ordered_mean(cluster_scores(theta));
}

double SmoothedEstimatingEquation::slope(double theta) const {
  std::vector<double> out(blocks_.n());
  kernels::cluster_slopes_omp(blocks_, theta, smoothing_.h, smoothing_.kernel, out);
  return kernels::ordered_mean(out);
}

double SmoothedEstimatingEquation::min_y() const {
  return *std::min_element(blocks_.y.begin(), blocks_.y.end());
}

double SmoothedEstimatingEquation::max_y() const {
  return *std::max_element(blocks_.y.begin(), blocks_.y.end());
}

SmoothedEstimatingEquation::Solution SmoothedEstimatingEquation::solve(double tol) const {
  double lo = min_y() - 8.0 * smoothing_.h;
  double hi = max_y() + 8.0 * smoothing_.h;
  auto f = [this](double x) { return value(x); };
  Solution sol;
  double flo = f(lo), fhi = f(hi);
  while (flo > 0.0 || fhi < 0.0) {
    if (sol.widenings == 3) {
      std::ostringstream os;
      os << "estimating equation has no sign change on [" << lo << ", " << hi
         << "]: EE(lo)=" << flo << ", EE(hi)=" << fhi;
      fail(ErrorKind::Solver, os.str());
    }
    const double half = 0.5 * (hi - lo);
    lo -= half;
    hi += half;
    flo = f(lo);
    fhi = f(hi);
    ++sol.widenings;
  }
  const auto root = solve_increasing_root(f, lo, hi, tol);
  sol.theta = root.x;
  sol.residual = root.fx;
  sol.iterations = root.iterations;
  return sol;
}

// ---------------------------------------------------------------------------

double QuantileEstimate::standard_error() const {
  return n_clusters > 0 ? sigma_hat / std::sqrt(double(n_clusters)) : 0.0;
}

CrossFitEstimator::CrossFitEstimator(const Dataset& data, EstimatorOptions options,
                                     std::uint64_t seed)
    : CrossFitEstimator(data,
                        fit_propensity_folds(data, partition_folds(data.n(), options.folds, seed),
                                             options.propensity, mix_seed(seed, 1)),
                        options, seed) {}

CrossFitEstimator::CrossFitEstimator(const Dataset& data, NuisanceFit nuisance,
                                     EstimatorOptions options, std::uint64_t seed)
    : data_(data), options_(std::move(options)), seed_(seed), nuisance_(std::move(nuisance)) {
  if (!(options_.epsilon > 0.0 && options_.epsilon < 0.5))
    fail(ErrorKind::Argument, "epsilon must lie in (0, 0.5)");
  if (nuisance_.plan.n != data.n() ||
      static_cast<int>(nuisance_.folds.size()) != nuisance_.plan.folds)
    fail(ErrorKind::Argument, "nuisance fit does not match the dataset");
  smoothing_.kernel.kind = options_.kernel;
  smoothing_.h = options_.bandwidth ? *options_.bandwidth : nqce::bandwidth(data);
  smoothing_.validate();
}

void CrossFitEstimator::check_q(double q) const {
  if (!(q >= options_.epsilon - 1e-12 && q <= 1.0 - options_.epsilon + 1e-12)) {
    std::ostringstream os;
    os << "quantile level " << q << " outside [" << options_.epsilon << ", "
       << 1.0 - options_.epsilon << "]";
    fail(ErrorKind::Argument, os.str());
  }
}

std::vector<const ClusterPropensityView*> CrossFitEstimator::eval_views() const {
  std::vector<const ClusterPropensityView*> views(data_.n());
  for (int i = 0; i < data_.n(); ++i)
    views[i] = &nuisance_.folds[nuisance_.plan.assignment[i]].views[i];
  return views;
}

QuantileEstimate CrossFitEstimator::np(EstimandKind t, double q, const PolicySpec& policy) const {
  policy.validate();
  check_q(q);
  const auto& plan = nuisance_.plan;
  const auto learner = make_learner(options_.outcome_learner);
  QuantileEstimate est;
  est.t = t;
  est.q = q;
  est.policy = policy;
  est.n_clusters = data_.n();
  auto& diag = est.diagnostics;
  diag.method = "np";
  diag.bandwidth = smoothing_.h;
  WeightCounters counters;

  std::vector<ThresholdPredictions> mhat(data_.n());
  std::vector<const ClusterPropensityView*> fold_views(data_.n());
  long mhat_clips = 0;
  for (int l = 0; l < plan.folds; ++l) {
    for (int i = 0; i < data_.n(); ++i) fold_views[i] = &nuisance_.folds[l].views[i];
    const double theta0 = ipw_quantile(data_, plan.ipw_set[l], t, q, policy, fold_views,
                                       options_.eif.weights, &counters);
    diag.theta_init.push_back(theta0);
    const auto model = fit_threshold_regression(*learner, data_, plan.outcome_set[l], theta0,
                                                mix_seed(seed_, 100 + l));
    for (int i : plan.eval[l]) mhat[i] = ThresholdPredictions::from_model(model, data_.clusters[i]);
    mhat_clips += model.model().clip_count();
  }

  std::vector<int> all(data_.n());
  std::iota(all.begin(), all.end(), 0);
  const auto views = eval_views();
  const auto ee = SmoothedEstimatingEquation::build(data_, all, t, q, policy, views, mhat,
                                                    smoothing_, options_.eif, &counters);
  const auto sol = ee.solve(options_.ee_tol);
  est.theta_hat = sol.theta;
  diag.solver_iterations = sol.iterations;
  diag.ee_residual = sol.residual;
  diag.bracket_widenings = sol.widenings;

  est.c_hat = ee.slope(sol.theta);
  if (!(est.c_hat > 1e-12)) {
    std::ostringstream os;
    os << "slope estimate " << est.c_hat << " at theta=" << sol.theta
       << " is not positive; the quantile sits outside the data support";
    fail(ErrorKind::Variance, os.str());
  }
  est.eif_scores = ee.cluster_scores(sol.theta);
  double ss = 0.0;
  for (auto& s : est.eif_scores) {
    s /= est.c_hat;
    ss += s * s;
  }
  est.sigma_hat = std::sqrt(ss / data_.n());
  diag.clip_count = nuisance_.clip_count() + mhat_clips;
  diag.truncation_count = counters.truncated;
  return est;
}

QuantileEstimate CrossFitEstimator::ipw(EstimandKind t, double q, const PolicySpec& policy) const {
  policy.validate();
  check_q(q);
  QuantileEstimate est;
  est.t = t;
  est.q = q;
  est.policy = policy;
  est.n_clusters = data_.n();
  est.diagnostics.method = "ipw";
  WeightCounters counters;

  std::vector<int> all(data_.n());
  std::iota(all.begin(), all.end(), 0);
  const auto views = eval_views();
  est.theta_hat = ipw_quantile(data_, all, t, q, policy, views, options_.eif.weights, &counters);
  est.diagnostics.truncation_count = counters.truncated;
  est.diagnostics.clip_count = nuisance_.clip_count();

  const int reps = options_.ipw_bootstrap;
  if (reps > 1) {
    // Cluster bootstrap with the fitted propensities held fixed.
    const auto s = ipw_sample(data_, all, t, policy, views, options_.eif.weights, nullptr);
    std::vector<std::size_t> order(s.y.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.y[a] < s.y[b]; });
    std::mt19937_64 rng(mix_seed(seed_, 0xB007));
    std::uniform_int_distribution<int> pick(0, data_.n() - 1);
    std::vector<int> count(data_.n());
    std::vector<double> thetas;
    thetas.reserve(reps);
    for (int b = 0; b < reps; ++b) {
      std::fill(count.begin(), count.end(), 0);
      for (int i = 0; i < data_.n(); ++i) ++count[pick(rng)];
      double total = 0.0;
      for (std::size_t k = 0; k < s.y.size(); ++k) total += s.w[k] * count[s.cluster[k]];
      if (!(total > 0.0)) continue;
      const double target = q * total;
      double cum = 0.0;
      double value = s.y[order.back()];
      for (std::size_t k = 0; k < order.size();) {
        const double y = s.y[order[k]];
        while (k < order.size() && s.y[order[k]] == y) {
          cum += s.w[order[k]] * count[s.cluster[order[k]]];
          ++k;
        }
        if (cum >= target) {
          value = y;
          break;
        }
      }
      thetas.push_back(value);
    }
    est.sigma_hat = sample_sd(thetas) * std::sqrt(double(data_.n()));
    est.diagnostics.note = "standard error from " + std::to_string(thetas.size()) +
                           " cluster bootstrap resamples";
  }
  return est;
}

// ---------------------------------------------------------------------------

const char* to_string(EffectKind kind) {
  switch (kind) {
    case EffectKind::OQE: return "OQE";
    case EffectKind::DQE_H: return "DQE(H)";
    case EffectKind::DQE_H2: return "DQE(H')";
    case EffectKind::SQE0: return "SQE0";
    case EffectKind::SQE1: return "SQE1";
    case EffectKind::TQE: return "TQE";
  }
  return "?";
}

EffectEstimate contrast(EffectKind kind, const QuantileEstimate& a, const QuantileEstimate& b) {
  if (a.eif_scores.size() != b.eif_scores.size())
    fail(ErrorKind::Argument, "contrasted estimates have different cluster counts");
  EffectEstimate e;
  e.kind = kind;
  e.value = a.theta_hat - b.theta_hat;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.eif_scores.size(); ++i) {
    const double d = a.eif_scores[i] - b.eif_scores[i];
    ss += d * d;
  }
  e.sigma = a.eif_scores.empty() ? 0.0 : std::sqrt(ss / double(a.eif_scores.size()));
  e.first = a;
  e.second = b;
  return e;
}

std::vector<EffectEstimate> effects(const CrossFitEstimator& est, double q, const PolicySpec& h,
                                    const PolicySpec& h_prime) {
  const auto star_h = est.np(EstimandKind::Star, q, h);
  const auto one_h = est.np(EstimandKind::Fix1, q, h);
  const auto zero_h = est.np(EstimandKind::Fix0, q, h);
  const bool same = h == h_prime;
  const auto star_g = same ? star_h : est.np(EstimandKind::Star, q, h_prime);
  const auto one_g = same ? one_h : est.np(EstimandKind::Fix1, q, h_prime);
  const auto zero_g = same ? zero_h : est.np(EstimandKind::Fix0, q, h_prime);
  return {
      contrast(EffectKind::OQE, star_h, star_g),
      contrast(EffectKind::DQE_H, one_h, zero_h),
      contrast(EffectKind::DQE_H2, one_g, zero_g),
      contrast(EffectKind::SQE0, zero_h, zero_g),
      contrast(EffectKind::SQE1, one_h, one_g),
      contrast(EffectKind::TQE, one_h, zero_g),
  };
}

}  // namespace nqce
