#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace nqce {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_quantile(double p);

inline double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho.
double bivariate_normal_cdf(double h, double k, double rho);

/// Gauss-Hermite rule for E[f(U)], U ~ N(0,1): weights sum to one.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Cached per node count; safe to call from several threads.
const GaussHermiteRule& gauss_hermite(int nodes);

// Gauss-Legendre rule on [-1, 1] (weights sum to 2), cached the same way.
const GaussHermiteRule& gauss_legendre(int nodes);

/// Smoothing kernel: a distribution function K with density k.
enum class KernelKind { Normal, Logistic };

struct SmoothingKernel {
  KernelKind kind = KernelKind::Normal;

  double cdf(double x) const {
    return kind == KernelKind::Normal ? normal_cdf(x) : expit(x);
  }
  double pdf(double x) const {
    if (kind == KernelKind::Normal) return normal_pdf(x);
    const double p = expit(x);
    return p * (1.0 - p);
  }
};

// 64-bit mixing used to derive independent stream seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Bracketed scalar root of a nondecreasing function. Returns the abscissa
/// with the smaller |f| among the final bracket ends.
struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
};
RootResult solve_increasing_root(const std::function<double(double)>& f, double lo,
                                 double hi, double f_tol, int max_iter = 200);

/// Maximize a unimodal function on [lo, hi]; tolerance in the argument.
struct MaxResult {
  double x = 0.0;
  double fx = 0.0;
};
MaxResult maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                          double x_tol);

// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> values);

// Empirical quantile with the inverse-CDF rule: smallest x with F_n(x) >= prob.
double empirical_quantile(std::vector<double> values, double prob);

}  // namespace nqce
