#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nqce/core.hpp"
#include "nqce/policies.hpp"

namespace nqce {

inline constexpr double kProbabilityClip = 1e-6;

// A fitted probability model over feature rows. Outputs are clipped to
// [1e-6, 1 - 1e-6]; every clip is counted.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;

  double predict(std::span<const double> row) const;
  long clip_count() const { return clips_.load(std::memory_order_relaxed); }
  virtual std::string summary() const = 0;

 protected:
  virtual double raw_predict(std::span<const double> row) const = 0;

 private:
  mutable std::atomic<long> clips_{0};
};

class ConstantModel final : public PredictiveModel {
 public:
  explicit ConstantModel(double p) : p_(p) {}
  std::string summary() const override;

 protected:
  double raw_predict(std::span<const double>) const override { return p_; }

 private:
  double p_;
};

struct LearnerSpec {
  std::string name = "logistic";  // "logistic" or "boosting"
  // logistic (IRLS)
  double ridge = 1e-8;
  int max_iter = 100;
  double tol = 1e-9;
  // boosting (depth-2 trees, logistic loss)
  int rounds = 200;
  double learning_rate = 0.1;
  int max_bins = 64;
  double lambda = 1.0;
};

class BinaryLearner {
 public:
  virtual ~BinaryLearner() = default;
  // Throws Fit when labels are all equal or the data are unusable.
  virtual std::unique_ptr<PredictiveModel> fit(const Matrix& features,
                                               std::span<const std::uint8_t> labels,
                                               std::uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

std::unique_ptr<BinaryLearner> make_learner(const LearnerSpec& spec);

/// Logistic regression by iteratively reweighted least squares on
/// standardized features, with a small ridge on the slopes.
class LogisticLearner final : public BinaryLearner {
 public:
  explicit LogisticLearner(LearnerSpec spec = {}) : spec_(std::move(spec)) {}
  std::unique_ptr<PredictiveModel> fit(const Matrix& features,
                                       std::span<const std::uint8_t> labels,
                                       std::uint64_t seed) const override;
  std::string name() const override { return "logistic"; }

 private:
  LearnerSpec spec_;
};

class LogisticModel final : public PredictiveModel {
 public:
  LogisticModel(double intercept, std::vector<double> coef, int iterations)
      : intercept_(intercept), coef_(std::move(coef)), iterations_(iterations) {}
  double intercept() const { return intercept_; }
  const std::vector<double>& coefficients() const { return coef_; }
  int iterations() const { return iterations_; }
  std::string summary() const override;

 protected:
  double raw_predict(std::span<const double> row) const override;

 private:
  double intercept_;
  std::vector<double> coef_;
  int iterations_;
};

/// Gradient-boosted depth-2 regression trees on logistic loss, with
/// histogram (quantile-binned) split search.
class BoostingLearner final : public BinaryLearner {
 public:
  explicit BoostingLearner(LearnerSpec spec = {}) : spec_(std::move(spec)) {}
  std::unique_ptr<PredictiveModel> fit(const Matrix& features,
                                       std::span<const std::uint8_t> labels,
                                       std::uint64_t seed) const override;
  std::string name() const override { return "boosting"; }

 private:
  LearnerSpec spec_;
};

// ---------------------------------------------------------------------------
// Individual propensity and Gaussian copula

// Feature row for the individual propensity: own learner features plus M.
std::vector<double> propensity_row(const ClusterRecord& c, int j);
Matrix propensity_design(const Dataset& data, std::span<const int> clusters);

/// Individual propensity model pi_j(X_j, M). Requires >= 20 individuals and
/// both label values.
std::unique_ptr<PredictiveModel> fit_individual_ps(const BinaryLearner& learner,
                                                   const Dataset& data,
                                                   std::span<const int> clusters,
                                                   std::uint64_t seed);

// Predicted marginals for every individual of one cluster.
std::vector<double> predict_margins(const PredictiveModel& model, const ClusterRecord& c);

inline constexpr int kDefaultQuadratureNodes = 40;
inline constexpr double kRhoUpper = 0.95;

struct CopulaFit {
  double rho = 0.0;
  int quadrature_nodes = kDefaultQuadratureNodes;
  double log_likelihood = 0.0;
  double lower = 0.0;
  double upper = kRhoUpper;
  std::string warning;  // non-empty when the optimum sits on a boundary
};

/// Admissible exchangeable-correlation range for clusters up to max_size.
/// Negative values are only supported for pairs.
std::pair<double, double> admissible_rho(int max_cluster_size);

/// pi(a | X, M) under the exchangeable Gaussian copula with the given
/// marginals, by Gauss-Hermite quadrature over the common latent factor.
double cluster_ps(std::span<const double> margins, double rho, const TreatmentVector& a,
                  int nodes = kDefaultQuadratureNodes);

/// Same, for all 2^M vectors at once (lexicographic order).
std::vector<double> cluster_ps_table(std::span<const double> margins, double rho,
                                     int nodes = kDefaultQuadratureNodes);

ClusterPropensityView cluster_ps_view(std::span<const double> margins, double rho,
                                      int nodes = kDefaultQuadratureNodes);

/// Pseudo log-likelihood sum_i log pi_rho(A_i | X_i, M_i) over the given
/// clusters, with marginals supplied per cluster.
double copula_log_likelihood(const Dataset& data, std::span<const int> clusters,
                             const std::vector<std::vector<double>>& margins, double rho,
                             int nodes);

/// Maximum pseudo-likelihood estimate of rho given fitted marginals.
CopulaFit fit_copula_rho(const Dataset& data, std::span<const int> clusters,
                         const PredictiveModel& margin_model,
                         int nodes = kDefaultQuadratureNodes, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Threshold-outcome regression m(theta, a, X, M)

// Features: {a_j, mean of a_{-j}, learner features of j, M}.
std::vector<double> threshold_row(const ClusterRecord& c, int j, int own, double peer_mean);

class ThresholdModel {
 public:
  ThresholdModel(std::shared_ptr<const PredictiveModel> model, double theta_init)
      : model_(std::move(model)), theta_init_(theta_init) {}

  double theta_init() const { return theta_init_; }
  const PredictiveModel& model() const { return *model_; }

  // m(theta_init, a, X, M) for individual j of cluster c at counterfactual a.
  double predict(const ClusterRecord& c, int j, const TreatmentVector& a) const;
  // Same, keyed by own treatment and number of treated peers.
  double predict(const ClusterRecord& c, int j, int own, int treated_peers) const;

 private:
  std::shared_ptr<const PredictiveModel> model_;
  double theta_init_;
};

/// Regress 1{Y <= theta_init} on the threshold features over the given
/// clusters. All-equal labels give a clipped constant model.
ThresholdModel fit_threshold_regression(const BinaryLearner& learner, const Dataset& data,
                                        std::span<const int> clusters, double theta_init,
                                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Per-fold propensity fits shared by every estimand on one dataset.

struct PropensityFold {
  std::shared_ptr<const PredictiveModel> margin_model;
  CopulaFit copula;
  // views[i]: pi under this fold's model for every cluster i of the dataset.
  std::vector<ClusterPropensityView> views;
};

struct NuisanceFit {
  FoldPlan plan;
  std::vector<PropensityFold> folds;

  long clip_count() const;
  std::string summary() const;
};

struct PropensityOptions {
  LearnerSpec learner;
  int quadrature_nodes = kDefaultQuadratureNodes;
  // When set, the copula correlation is fixed instead of estimated.
  std::optional<double> fixed_rho;
};

/// Fits, for every fold l, the marginal model and copula on everything
/// outside D_l, then evaluates the cluster propensity for every cluster.
NuisanceFit fit_propensity_folds(const Dataset& data, const FoldPlan& plan,
                                 const PropensityOptions& options, std::uint64_t seed);

}  // namespace nqce
