#include "nqce/inference.hpp"

#include <cmath>
#include <sstream>

#include "nqce/errors.hpp"
#include "nqce/numerics.hpp"

namespace nqce {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    fail(ErrorKind::Argument, "alpha must lie in (0, 1], got " + std::to_string(alpha));
}

double critical_z(double alpha) { return alpha >= 1.0 ? 0.0 : normal_quantile(1.0 - alpha / 2.0); }

void check_grid(std::span<const double> grid) {
  if (grid.empty()) fail(ErrorKind::Argument, "empty band grid");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!std::isfinite(grid[g])) fail(ErrorKind::Argument, "non-finite grid value");
    if (g > 0 && !(grid[g] > grid[g - 1]))
      fail(ErrorKind::Argument, "band grid must be strictly increasing");
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

Interval wald_interval(double theta, double sigma, int n, double alpha) {
  check_alpha(alpha);
  if (!std::isfinite(sigma) || sigma < 0.0)
    fail(ErrorKind::Argument, "sigma must be finite and nonnegative");
  if (n < 1) fail(ErrorKind::Argument, "interval needs n >= 1");
  const double half = critical_z(alpha) * sigma / std::sqrt(double(n));
  return {theta - half, theta + half};
}

Interval pointwise_ci(const QuantileEstimate& estimate, double alpha) {
  return wald_interval(estimate.theta_hat, estimate.sigma_hat, estimate.n(), alpha);
}

Interval pointwise_ci(const EffectEstimate& effect, double alpha) {
  return wald_interval(effect.value, effect.sigma, effect.first.n(), alpha);
}

double BandResult::standard_error(int g) const { return sigma.at(g) / std::sqrt(double(n)); }

BandResult uniform_band(std::span<const double> grid, std::span<const double> estimate,
                        std::span<const double> sigma, const Matrix& scores,
                        const BandOptions& options) {
  check_grid(grid);
  check_alpha(options.alpha);
  if (options.alpha >= 1.0) fail(ErrorKind::Argument, "band alpha must be below 1");
  if (options.draws < kMinBootstrapDraws)
    fail(ErrorKind::Argument, "bootstrap needs at least " + std::to_string(kMinBootstrapDraws) +
                                  " draws, got " + std::to_string(options.draws));
  const auto G = grid.size();
  if (estimate.size() != G || sigma.size() != G || std::size_t(scores.cols()) != G)
    fail(ErrorKind::Argument, "score matrix has " + std::to_string(scores.cols()) +
                                  " columns for a grid of " + std::to_string(G));
  if (scores.rows() < 2) fail(ErrorKind::Argument, "score matrix needs at least two clusters");

  BandResult r;
  r.grid.assign(grid.begin(), grid.end());
  r.estimate.assign(estimate.begin(), estimate.end());
  r.sigma.assign(sigma.begin(), sigma.end());
  r.n = static_cast<int>(scores.rows());
  r.alpha = options.alpha;
  r.draws = options.draws;
  r.seed = options.seed;

  std::vector<int> kept;
  for (std::size_t g = 0; g < G; ++g) {
    if (!std::isfinite(sigma[g]) || sigma[g] < 0.0)
      fail(ErrorKind::Argument, "sigma at grid point " + fmt(grid[g]) + " is not a valid scale");
    if (sigma[g] > 0.0)
      kept.push_back(int(g));
    else
      r.warnings.push_back("grid point " + fmt(grid[g]) + " has zero sigma; left out of the sup");
  }
  if (kept.empty()) fail(ErrorKind::Variance, "every grid point has zero sigma");

  Matrix z(scores.rows(), Eigen::Index(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) z.col(k) = scores.col(kept[k]) / sigma[kept[k]];
  const auto sups = kernels::multiplier_sups_omp(z, options.draws, options.seed, options.multiplier);
  r.c_alpha = empirical_quantile(sups, 1.0 - options.alpha);

  const double zc = critical_z(options.alpha);
  r.contains_pointwise = r.c_alpha >= zc;
  if (!r.contains_pointwise)
    r.warnings.push_back("uniform critical value " + fmt(r.c_alpha) +
                         " is below the pointwise one " + fmt(zc));
  const double rt = std::sqrt(double(r.n));
  for (std::size_t g = 0; g < G; ++g) {
    const double se = sigma[g] / rt;
    r.pointwise_lo.push_back(estimate[g] - zc * se);
    r.pointwise_hi.push_back(estimate[g] + zc * se);
    r.uniform_lo.push_back(estimate[g] - r.c_alpha * se);
    r.uniform_hi.push_back(estimate[g] + r.c_alpha * se);
  }
  return r;
}

BandResult uniform_band(std::span<const double> grid, std::span<const QuantileEstimate> estimates,
                        const BandOptions& options) {
  if (estimates.size() != grid.size())
    fail(ErrorKind::Argument, "one estimate per grid point required");
  if (estimates.empty()) fail(ErrorKind::Argument, "empty band grid");
  const auto n = estimates.front().eif_scores.size();
  Matrix scores(Eigen::Index(n), Eigen::Index(grid.size()));
  std::vector<double> theta, sigma;
  for (std::size_t g = 0; g < estimates.size(); ++g) {
    const auto& e = estimates[g];
    if (e.eif_scores.empty())
      fail(ErrorKind::Argument, "bands need influence scores; the estimate at " + fmt(grid[g]) +
                                    " has none");
    if (e.eif_scores.size() != n)
      fail(ErrorKind::Argument, "estimates disagree on the number of clusters");
    for (std::size_t i = 0; i < n; ++i) scores(Eigen::Index(i), Eigen::Index(g)) = e.eif_scores[i];
    theta.push_back(e.theta_hat);
    sigma.push_back(e.sigma_hat);
  }
  auto r = uniform_band(grid, theta, sigma, scores, options);
  r.estimates.assign(estimates.begin(), estimates.end());
  return r;
}

BandResult uniform_band(std::span<const double> grid, std::span<const EffectEstimate> effects,
                        const BandOptions& options) {
  if (effects.size() != grid.size())
    fail(ErrorKind::Argument, "one effect per grid point required");
  if (effects.empty()) fail(ErrorKind::Argument, "empty band grid");
  const auto n = effects.front().first.eif_scores.size();
  Matrix scores(Eigen::Index(n), Eigen::Index(grid.size()));
  std::vector<double> value, sigma;
  for (std::size_t g = 0; g < effects.size(); ++g) {
    const auto& e = effects[g];
    if (e.first.eif_scores.size() != n || e.second.eif_scores.size() != n || n == 0)
      fail(ErrorKind::Argument, "effect at " + fmt(grid[g]) + " lacks matching influence scores");
    for (std::size_t i = 0; i < n; ++i)
      scores(Eigen::Index(i), Eigen::Index(g)) = e.first.eif_scores[i] - e.second.eif_scores[i];
    value.push_back(e.value);
    sigma.push_back(e.sigma);
  }
  return uniform_band(grid, value, sigma, scores, options);
}

namespace {

template <class Fn>
QuantileEstimate at_point(const char* axis, double g, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("grid point ") + axis + "=" + fmt(g) + ": " + e.what());
  }
}

}  // namespace

BandResult band_over_q(const CrossFitEstimator& est, EstimandKind t, const PolicySpec& policy,
                       std::span<const double> q_grid, const BandOptions& options) {
  check_grid(q_grid);
  policy.validate();
  std::vector<QuantileEstimate> estimates;
  for (double q : q_grid)
    estimates.push_back(at_point("q", q, [&] { return est.np(t, q, policy); }));
  auto r = uniform_band(q_grid, estimates, options);
  r.axis = "q";
  return r;
}

BandResult band_over_delta(const CrossFitEstimator& est, EstimandKind t, double q,
                           PolicyKind kind, std::span<const double> grid,
                           const BandOptions& options, DeltaRange range) {
  check_grid(grid);
  if (kind == PolicyKind::DAP) fail(ErrorKind::Argument, "no parameter band for DAP policies");
  const bool uap = kind == PolicyKind::UAP;
  if (!uap && (grid.front() < range.lo || grid.back() > range.hi))
    fail(ErrorKind::Argument, "delta grid leaves [" + fmt(range.lo) + ", " + fmt(range.hi) + "]");
  const char* axis = uap ? "alpha" : "delta";
  std::vector<QuantileEstimate> estimates;
  for (double d : grid) {
    const PolicySpec policy{kind, d};
    policy.validate();
    estimates.push_back(at_point(axis, d, [&] { return est.np(t, q, policy); }));
  }
  auto r = uniform_band(grid, estimates, options);
  r.axis = axis;
  if (kind != PolicyKind::CPS)
    r.warnings.push_back(std::string("band over ") + to_string(kind) +
                         " parameters is computed mechanically; theory per appendix not restated");
  return r;
}

}  // namespace nqce
