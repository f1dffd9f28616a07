#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nqce/core.hpp"
#include "nqce/estimators.hpp"
#include "nqce/kernels.hpp"
#include "nqce/policies.hpp"

namespace nqce {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// theta -/+ z_{1-alpha/2} sigma / sqrt(n). alpha in (0, 1].
Interval wald_interval(double theta, double sigma, int n, double alpha);
Interval pointwise_ci(const QuantileEstimate& estimate, double alpha);
Interval pointwise_ci(const EffectEstimate& effect, double alpha);

inline constexpr int kMinBootstrapDraws = 200;

struct BandOptions {
  double alpha = 0.05;
  int draws = 1000;
  std::uint64_t seed = 0;
  kernels::Multiplier multiplier = kernels::Multiplier::Rademacher;
};

struct BandResult {
  std::string axis;  // "q", "delta", "alpha" or a caller label
  std::vector<double> grid;
  std::vector<double> estimate;
  std::vector<double> sigma;
  std::vector<QuantileEstimate> estimates;  // filled by band_over_q / band_over_delta
  int n = 0;
  double alpha = 0.05;
  double c_alpha = 0.0;
  std::vector<double> pointwise_lo, pointwise_hi;
  std::vector<double> uniform_lo, uniform_hi;
  int draws = 0;
  std::uint64_t seed = 0;
  // false when c_alpha < z_{1-alpha/2}, i.e. the uniform band is narrower
  // than the pointwise one somewhere
  bool contains_pointwise = true;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(grid.size()); }
  double standard_error(int g) const;
};

/// Band from raw influence scores. scores is n x G (cluster i, grid point g);
/// the multiplier statistic uses scores(i, g) / sigma[g]. Grid points with
/// sigma = 0 are left out of the sup and get a warning.
BandResult uniform_band(std::span<const double> grid, std::span<const double> estimate,
                        std::span<const double> sigma, const Matrix& scores,
                        const BandOptions& options);

/// Band from NP estimates sharing one dataset and fold plan.
BandResult uniform_band(std::span<const double> grid, std::span<const QuantileEstimate> estimates,
                        const BandOptions& options);

/// Band for effect contrasts; scores are differenced per cluster.
BandResult uniform_band(std::span<const double> grid, std::span<const EffectEstimate> effects,
                        const BandOptions& options);

BandResult band_over_q(const CrossFitEstimator& est, EstimandKind t, const PolicySpec& policy,
                       std::span<const double> q_grid, const BandOptions& options);

struct DeltaRange {
  double lo = 0.5;
  double hi = 2.0;
};

/// Grid over the policy parameter of `kind` (delta for CPS/IPS, alpha for UAP).
BandResult band_over_delta(const CrossFitEstimator& est, EstimandKind t, double q,
                           PolicyKind kind, std::span<const double> grid,
                           const BandOptions& options, DeltaRange range = {});

}  // namespace nqce
