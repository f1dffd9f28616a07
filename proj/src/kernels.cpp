#include "nqce/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nqce/errors.hpp"

namespace nqce::kernels {

namespace {

void check_out(const ScoreBlocks& blocks, std::span<double> out) {
  if (out.size() != blocks.eta.size() || blocks.offsets.size() != blocks.eta.size() + 1)
    fail(ErrorKind::Argument, "score block dimensions disagree");
}

inline double score_one(const ScoreBlocks& b, int i, double theta, double q, double inv_h,
                        const SmoothingKernel& kernel) {
  double s = b.eta[i];
  for (std::size_t k = b.offsets[i]; k < b.offsets[i + 1]; ++k)
    s += b.coef[k] * (kernel.cdf((theta - b.y[k]) * inv_h) - q);
  return s;
}

inline double slope_one(const ScoreBlocks& b, int i, double theta, double inv_h,
                        const SmoothingKernel& kernel) {
  double s = 0.0;
  for (std::size_t k = b.offsets[i]; k < b.offsets[i + 1]; ++k)
    s += b.coef[k] * kernel.pdf((theta - b.y[k]) * inv_h);
  return s * inv_h;
}

}  // namespace

void cluster_scores_serial(const ScoreBlocks& blocks, double theta, double q, double h,
                           const SmoothingKernel& kernel, std::span<double> out) {
  check_out(blocks, out);
  const double inv_h = 1.0 / h;
  for (int i = 0; i < blocks.n(); ++i) out[i] = score_one(blocks, i, theta, q, inv_h, kernel);
}

void cluster_scores_omp(const ScoreBlocks& blocks, double theta, double q, double h,
                        const SmoothingKernel& kernel, std::span<double> out) {
  check_out(blocks, out);
  const double inv_h = 1.0 / h;
  const int n = blocks.n();
#pragma omp parallel for schedule(static) if (n > 256)
  for (int i = 0; i < n; ++i) out[i] = score_one(blocks, i, theta, q, inv_h, kernel);
}

void cluster_slopes_serial(const ScoreBlocks& blocks, double theta, double h,
                           const SmoothingKernel& kernel, std::span<double> out) {
  check_out(blocks, out);
  const double inv_h = 1.0 / h;
  for (int i = 0; i < blocks.n(); ++i) out[i] = slope_one(blocks, i, theta, inv_h, kernel);
}

void cluster_slopes_omp(const ScoreBlocks& blocks, double theta, double h,
                        const SmoothingKernel& kernel, std::span<double> out) {
  check_out(blocks, out);
  const double inv_h = 1.0 / h;
  const int n = blocks.n();
#pragma omp parallel for schedule(static) if (n > 256)
  for (int i = 0; i < n; ++i) out[i] = slope_one(blocks, i, theta, inv_h, kernel);
}

double ordered_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / double(values.size());
}

std::vector<double> multiplier_draw(int n, std::uint64_t seed, int b, Multiplier kind) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
  std::vector<double> xi(n);
  if (kind == Multiplier::Rademacher) {
    // One random bit per entry, 64 entries per engine call.
    std::uint64_t bits = 0;
    for (int i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng();
      xi[i] = (bits & 1u) ? 1.0 : -1.0;
      bits >>= 1;
    }
  } else {
    std::normal_distribution<double> norm;
    for (auto& v : xi) v = norm(rng);
  }
  return xi;
}

namespace {

double sup_for_draw(const Matrix& z, std::uint64_t seed, int b, Multiplier kind) {
  const int n = static_cast<int>(z.rows());
  const auto xi = multiplier_draw(n, seed, b, kind);
  const auto g = z.cols();
  std::vector<double> acc(g, 0.0);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < g; ++k) acc[k] += xi[i] * z(i, k);
  const double scale = 1.0 / std::sqrt(double(n));
  double sup = 0.0;
  for (double a : acc) sup = std::max(sup, std::abs(a) * scale);
  return sup;
}

void check_draws(const Matrix& z, int draws) {
  if (draws < 1) fail(ErrorKind::Argument, "need at least one multiplier draw");
  if (z.rows() < 1 || z.cols() < 1) fail(ErrorKind::Argument, "empty score matrix");
}

}  // namespace

std::vector<double> multiplier_sups_serial(const Matrix& z, int draws, std::uint64_t seed,
                                           Multiplier kind) {
  check_draws(z, draws);
  std::vector<double> sups(draws);
  for (int b = 0; b < draws; ++b) sups[b] = sup_for_draw(z, seed, b, kind);
  return sups;
}

std::vector<double> multiplier_sups_omp(const Matrix& z, int draws, std::uint64_t seed,
                                        Multiplier kind) {
  check_draws(z, draws);
  std::vector<double> sups(draws);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < draws; ++b) sups[b] = sup_for_draw(z, seed, b, kind);
  return sups;
}

}  // namespace nqce::kernels
