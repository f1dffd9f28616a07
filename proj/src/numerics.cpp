#include "nqce/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/owens_t.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "nqce/errors.hpp"

namespace nqce {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::Argument, "normal_quantile needs p in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double bivariate_normal_cdf(double h, double k, double rho) {
  if (rho <= -1.0 || rho >= 1.0) fail(ErrorKind::Argument, "correlation must be in (-1,1)");
  // Owen's T representation is singular on the axes; a 1e-12 nudge is
  // far below the accuracy needed anywhere in this library.
  if (h == 0.0) h = 1e-12;
  if (k == 0.0) k = 1e-12;
  const double s = std::sqrt(1.0 - rho * rho);
  const double ah = (k - rho * h) / (h * s);
  const double ak = (h - rho * k) / (k * s);
  const double beta = (h * k > 0.0) ? 0.0 : 0.5;
  return 0.5 * (normal_cdf(h) + normal_cdf(k)) - boost::math::owens_t(h, ah) -
         boost::math::owens_t(k, ak) - beta;
}

namespace {

// Golub-Welsch: eigen-decomposition of the Jacobi matrix (zero diagonal for
// both families); weights rescaled to sum to `mass`.
GaussHermiteRule build_rule(int n, bool legendre, double mass) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    sub[k - 1] = legendre ? kk / std::sqrt(4.0 * kk * kk - 1.0) : std::sqrt(kk);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()[i];
    const double v = solver.eigenvectors()(0, i);
    rule.weights[i] = v * v;
  }
  const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
  for (auto& w : rule.weights) w *= mass / total;
  return rule;
}

const GaussHermiteRule& cached_rule(int nodes, bool legendre) {
  if (nodes < 2) fail(ErrorKind::Argument, "quadrature rule needs >= 2 nodes");
  static std::mutex mu;
  static std::map<std::pair<int, bool>, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{nodes, legendre}];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(build_rule(nodes, legendre, legendre ? 2.0 : 1.0));
  return *slot;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int nodes) { return cached_rule(nodes, false); }

const GaussHermiteRule& gauss_legendre(int nodes) { return cached_rule(nodes, true); }

RootResult solve_increasing_root(const std::function<double(double)>& f, double lo,
                                 double hi, double f_tol, int max_iter) {
  RootResult out;
  const double flo = f(lo);
  const double fhi = f(hi);
  if (flo > 0.0 || fhi < 0.0) {
    fail(ErrorKind::Solver, "no sign change on bracket: f(" + std::to_string(lo) +
                                ")=" + std::to_string(flo) + ", f(" + std::to_string(hi) +
                                ")=" + std::to_string(fhi));
  }
  if (std::abs(flo) <= f_tol) return {lo, flo, 0};
  if (std::abs(fhi) <= f_tol) return {hi, fhi, 0};

  double best_x = lo, best_f = flo;
  auto tracked = [&](double x) {
    const double fx = f(x);
    if (std::abs(fx) < std::abs(best_f)) {
      best_x = x;
      best_f = fx;
    }
    return fx;
  };
  auto tol = [&](double a, double b) {
    return std::abs(best_f) <= f_tol || std::abs(b - a) <= 4e-16 * std::max(1.0, std::abs(a));
  };
  std::uintmax_t iters = static_cast<std::uintmax_t>(max_iter);
  boost::math::tools::toms748_solve(tracked, lo, hi, flo, fhi, tol, iters);
  out.x = best_x;
  out.fx = best_f;
  out.iterations = static_cast<int>(iters);
  return out;
}

MaxResult maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                          double x_tol) {
  const int bits = std::max(8, static_cast<int>(std::ceil(1.0 - std::log2(x_tol))));
  auto neg = [&](double x) { return -f(x); };
  auto [x, fx] = boost::math::tools::brent_find_minima(neg, lo, hi, bits);
  return {x, -fx};
}

double sample_sd(std::span<const double> values) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / double(n - 1));
}

double empirical_quantile(std::vector<double> values, double prob) {
  if (values.empty()) fail(ErrorKind::Argument, "quantile of empty sample");
  const auto n = values.size();
  auto k = static_cast<std::size_t>(std::ceil(prob * double(n)));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  return values[k - 1];
}

}  // namespace nqce
