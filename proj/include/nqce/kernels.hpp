#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nqce/core.hpp"
#include "nqce/numerics.hpp"

// Hot loops with a serial reference and an OpenMP version. The two produce
// bit-identical results: parallel work writes per-item slots and every
// reduction runs serially in index order.
namespace nqce::kernels {

/// Flattened per-cluster ingredients of the smoothed estimating equation.
/// Cluster i owns individuals offsets[i] .. offsets[i+1]-1.
struct ScoreBlocks {
  std::vector<std::size_t> offsets{0};
  std::vector<double> y;
  std::vector<double> coef;  // w_j(A_i) / (M_i pi(A_i))
  std::vector<double> eta;   // theta-free augmentation, one per cluster

  int n() const { return static_cast<int>(eta.size()); }
};

// gamma_i(theta) = sum_j coef_ij (K((theta - y_ij)/h) - q) + eta_i
void cluster_scores_serial(const ScoreBlocks& blocks, double theta, double q, double h,
                           const SmoothingKernel& kernel, std::span<double> out);
void cluster_scores_omp(const ScoreBlocks& blocks, double theta, double q, double h,
                        const SmoothingKernel& kernel, std::span<double> out);

// d gamma_i / d theta = sum_j coef_ij k((theta - y_ij)/h) / h
void cluster_slopes_serial(const ScoreBlocks& blocks, double theta, double h,
                           const SmoothingKernel& kernel, std::span<double> out);
void cluster_slopes_omp(const ScoreBlocks& blocks, double theta, double h,
                        const SmoothingKernel& kernel, std::span<double> out);

// Mean with a fixed left-to-right summation order.
double ordered_mean(std::span<const double> values);

enum class Multiplier { Rademacher, Gaussian };

/// For each of B draws xi (seeded by mix_seed(seed, b)), returns
/// max_g |n^{-1/2} sum_i xi_i z(i, g)|. z is n x G.
std::vector<double> multiplier_sups_serial(const Matrix& z, int draws, std::uint64_t seed,
                                           Multiplier kind);
std::vector<double> multiplier_sups_omp(const Matrix& z, int draws, std::uint64_t seed,
                                        Multiplier kind);

// The multiplier vector used for draw b; exposed for tests.
std::vector<double> multiplier_draw(int n, std::uint64_t seed, int b, Multiplier kind);

}  // namespace nqce::kernels
