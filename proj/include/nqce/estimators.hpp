#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nqce/core.hpp"
#include "nqce/kernels.hpp"
#include "nqce/numerics.hpp"
#include "nqce/nuisance.hpp"
#include "nqce/policies.hpp"

namespace nqce {

struct SmoothingSpec {
  SmoothingKernel kernel;
  double h = 1.0;
  void validate() const;
};

/// h = sd(Y) * (sum_i M_i)^{-0.26} over all individuals.
double bandwidth(const Dataset& data);

inline constexpr double kDefaultTruncationCap = 50.0;

/// How inverse propensities enter the weights.
struct WeightOptions {
  bool truncate = false;
  double cap = kDefaultTruncationCap;  // max of 1/pi when truncating
};

// Counts accumulated while building weights.
struct WeightCounters {
  long truncated = 0;
};

/// pi(A_i), floored at 1/cap when truncating. Throws Overlap below the
/// positivity floor otherwise.
double observed_propensity(const ClusterPropensityView& ps, std::size_t obs_idx,
                           const WeightOptions& opts, WeightCounters* counters);

/// Weighted step-function root: the smallest y with cumulative weight
/// (over y sorted ascending) >= q * total. Ties share one step.
double weighted_step_root(std::span<const double> y, std::span<const double> w, double q);

/// Cross-fitted IPW quantile: individual weights w_j(A_i)/(M_i pi(A_i)) with
/// pi from views[i]. `views` is indexed by cluster index of `data`.
double ipw_quantile(const Dataset& data, std::span<const int> clusters, EstimandKind t,
                    double q, const PolicySpec& policy,
                    std::span<const ClusterPropensityView* const> views,
                    const WeightOptions& opts = {}, WeightCounters* counters = nullptr);

/// m-hat for one cluster, keyed by (individual, own treatment, treated peers):
/// value(j, own, k) = values[(j * 2 + own) * M + k].
struct ThresholdPredictions {
  int m = 0;
  std::vector<double> values;
  double operator()(int j, int own, int treated_peers) const {
    return values[(static_cast<std::size_t>(j) * 2 + own) * m + treated_peers];
  }
  static ThresholdPredictions constant(int m, double value);
  static ThresholdPredictions from_model(const ThresholdModel& model, const ClusterRecord& c);
};

/// Per-cluster EIF pieces: psi_part is (1/M) sum_j sum_a of the smoothed psi
/// (nondecreasing in theta); eta_part the theta-free augmentation.
struct EifTerms {
  double psi_part = 0.0;
  double eta_part = 0.0;
};

struct EifOptions {
  WeightOptions weights;
  // Evaluate m-hat in the FIX augmentation at own treatment 0 (the literal
  // reading of the indicator) instead of at the fixed treatment.
  bool literal_eta_pairing = false;
};

// Coefficients and eta for one cluster, the building block of ScoreBlocks.
struct ClusterScoreParts {
  std::vector<double> coef;  // w_j(A)/(M pi(A)) per individual
  double eta = 0.0;
};

ClusterScoreParts cluster_score_parts(const ClusterRecord& c, EstimandKind t, double q,
                                      const PolicySpec& policy, const ClusterPropensityView& ps,
                                      const ThresholdPredictions& mhat, const EifOptions& opts,
                                      WeightCounters* counters = nullptr);

EifTerms eif_terms(const ClusterRecord& c, double theta, double q, EstimandKind t,
                   const PolicySpec& policy, const ClusterPropensityView& ps,
                   const ThresholdPredictions& mhat, const SmoothingSpec& smoothing,
                   const EifOptions& opts = {});

/// The pooled smoothed estimating equation (1/n) sum_i gamma_i(theta).
class SmoothedEstimatingEquation {
 public:
  SmoothedEstimatingEquation(kernels::ScoreBlocks blocks, double q, SmoothingSpec smoothing);

  /// Builds the blocks for the given clusters with per-cluster nuisances.
  /// views and mhat are indexed by cluster index of `data`.
  static SmoothedEstimatingEquation build(const Dataset& data, std::span<const int> clusters,
                                          EstimandKind t, double q, const PolicySpec& policy,
                                          std::span<const ClusterPropensityView* const> views,
                                          std::span<const ThresholdPredictions> mhat,
                                          const SmoothingSpec& smoothing, const EifOptions& opts,
                                          WeightCounters* counters = nullptr);

  double value(double theta) const;
  // Closed-form derivative in theta: (1/n) sum_i sum_j coef k((theta-Y)/h)/h.
  double slope(double theta) const;
  std::vector<double> cluster_scores(double theta) const;
  double min_y() const;
  double max_y() const;
  const kernels::ScoreBlocks& blocks() const { return blocks_; }
  const SmoothingSpec& smoothing() const { return smoothing_; }
  double q() const { return q_; }

  struct Solution {
    double theta = 0.0;
    double residual = 0.0;
    int iterations = 0;
    int widenings = 0;
  };
  /// Root on [min Y - 8h, max Y + 8h], widened up to three times.
  Solution solve(double tol = 1e-10) const;

 private:
  kernels::ScoreBlocks blocks_;
  double q_;
  SmoothingSpec smoothing_;
};

struct EstimateDiagnostics {
  std::string method;  // "np" or "ipw"
  int solver_iterations = 0;
  double ee_residual = 0.0;
  int bracket_widenings = 0;
  long clip_count = 0;
  long truncation_count = 0;
  double bandwidth = 0.0;
  std::vector<double> theta_init;  // per fold, np only
  std::string note;
};

struct QuantileEstimate {
  EstimandKind t = EstimandKind::Star;
  double q = 0.5;
  PolicySpec policy;
  double theta_hat = 0.0;
  double sigma_hat = 0.0;
  double c_hat = 0.0;
  std::vector<double> eif_scores;  // per cluster; empty for IPW
  int n_clusters = 0;
  EstimateDiagnostics diagnostics;

  int n() const { return n_clusters; }
  double standard_error() const;
};

struct EstimatorOptions {
  int folds = 5;
  double epsilon = 0.05;
  EifOptions eif;
  KernelKind kernel = KernelKind::Normal;
  std::optional<double> bandwidth;
  PropensityOptions propensity;
  LearnerSpec outcome_learner;
  double ee_tol = 1e-10;
  // Cluster-bootstrap resamples for IPW standard errors; 0 disables.
  int ipw_bootstrap = 500;
};

/// Owns one fold plan and propensity fit for a dataset; every (t, q, policy)
/// estimate reuses them.
class CrossFitEstimator {
 public:
  CrossFitEstimator(const Dataset& data, EstimatorOptions options, std::uint64_t seed);
  CrossFitEstimator(const Dataset& data, NuisanceFit nuisance, EstimatorOptions options,
                    std::uint64_t seed);

  QuantileEstimate np(EstimandKind t, double q, const PolicySpec& policy) const;
  QuantileEstimate ipw(EstimandKind t, double q, const PolicySpec& policy) const;

  const Dataset& data() const { return data_; }
  const NuisanceFit& nuisance() const { return nuisance_; }
  const EstimatorOptions& options() const { return options_; }
  double bandwidth() const { return smoothing_.h; }
  std::uint64_t seed() const { return seed_; }

  // Per-cluster propensity views from each cluster's own fold.
  std::vector<const ClusterPropensityView*> eval_views() const;

 private:
  void check_q(double q) const;

  const Dataset& data_;
  EstimatorOptions options_;
  std::uint64_t seed_;
  NuisanceFit nuisance_;
  SmoothingSpec smoothing_;
};

enum class EffectKind { OQE, DQE_H, DQE_H2, SQE0, SQE1, TQE };
const char* to_string(EffectKind kind);

struct EffectEstimate {
  EffectKind kind = EffectKind::OQE;
  double value = 0.0;
  double sigma = 0.0;
  // value = first.theta_hat - second.theta_hat
  QuantileEstimate first;
  QuantileEstimate second;
};

/// Contrast of two estimates on the same clusters; sigma from score differences.
EffectEstimate contrast(EffectKind kind, const QuantileEstimate& a, const QuantileEstimate& b);

/// OQE, DQE(H), DQE(H'), SQE0, SQE1 and TQE from the six NP estimates.
std::vector<EffectEstimate> effects(const CrossFitEstimator& est, double q, const PolicySpec& h,
                                    const PolicySpec& h_prime);

}  // namespace nqce
