#include "nqce/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "nqce/numerics.hpp"

namespace nqce {

std::vector<double> propensity_row(const ClusterRecord& c, int j) {
  const Matrix& f = c.learner_features();
  std::vector<double> row(f.cols() + 1);
  for (Eigen::Index k = 0; k < f.cols(); ++k) row[k] = f(j, k);
  row.back() = c.size();
  return row;
}

Matrix propensity_design(const Dataset& data, std::span<const int> clusters) {
  int rows = 0;
  for (int i : clusters) rows += data.clusters[i].size();
  const auto cols = data.clusters.front().learner_features().cols() + 1;
  Matrix x(rows, cols);
  int r = 0;
  for (int i : clusters) {
    const auto& c = data.clusters[i];
    for (int j = 0; j < c.size(); ++j, ++r) {
      const auto row = propensity_row(c, j);
      for (Eigen::Index k = 0; k < cols; ++k) x(r, k) = row[k];
    }
  }
  return x;
}

std::unique_ptr<PredictiveModel> fit_individual_ps(const BinaryLearner& learner,
                                                   const Dataset& data,
                                                   std::span<const int> clusters,
                                                   std::uint64_t seed) {
  Matrix x = propensity_design(data, clusters);
  std::vector<std::uint8_t> y;
  y.reserve(x.rows());
  for (int i : clusters)
    for (auto a : data.clusters[i].treatments) y.push_back(a);
  if (y.size() < 20)
    fail(ErrorKind::Fit, "individual propensity needs >= 20 training individuals, got " +
                             std::to_string(y.size()));
  return learner.fit(x, y, seed);
}

std::vector<double> predict_margins(const PredictiveModel& model, const ClusterRecord& c) {
  std::vector<double> out(c.size());
  for (int j = 0; j < c.size(); ++j) out[j] = model.predict(propensity_row(c, j));
  return out;
}

// ---------------------------------------------------------------------------

std::pair<double, double> admissible_rho(int max_cluster_size) {
  if (max_cluster_size <= 2) return {-kRhoUpper, kRhoUpper};
  return {0.0, kRhoUpper};
}

namespace {

void check_rho(double rho, int m) {
  const auto [lo, hi] = admissible_rho(m);
  if (!(rho >= lo && rho <= hi)) {
    fail(ErrorKind::Argument, "copula correlation " + std::to_string(rho) +
                                  " is outside the admissible range for cluster size " +
                                  std::to_string(m));
  }
}

// Latent thresholds: A_j = 1 iff Z_j > c_j with c_j = Phi^{-1}(1 - pi_j).
std::vector<double> latent_cuts(std::span<const double> margins) {
  std::vector<double> cuts(margins.size());
  for (std::size_t j = 0; j < margins.size(); ++j) {
    const double p = margins[j];
    if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::Argument, "marginal propensity outside (0,1)");
    cuts[j] = -normal_quantile(p);
  }
  return cuts;
}

// Pairs with negative correlation: bivariate orthant probabilities.
std::vector<double> pair_table(std::span<const double> margins, double rho) {
  const auto cuts = latent_cuts(margins);
  const double p11 = bivariate_normal_cdf(-cuts[0], -cuts[1], rho);
  const double p1 = margins[0], p2 = margins[1];
  return {1.0 - p1 - p2 + p11, p2 - p11, p1 - p11, p11};
}

}  // namespace

namespace {

// Above this correlation the conditional probabilities become too steep in
// the factor for Gauss-Hermite; a composite Gauss-Legendre rule with panel
// breaks around each individual's transition point takes over.
constexpr double kHermiteRhoLimit = 0.3;
constexpr double kFactorRange = 9.0;

struct FactorRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // include the standard normal density
};

FactorRule factor_rule(std::span<const double> cuts, double rho, int nodes) {
  FactorRule rule;
  if (rho <= kHermiteRhoLimit) {
    const auto& gh = gauss_hermite(nodes);
    rule.nodes = gh.nodes;
    rule.weights = gh.weights;
    return rule;
  }
  const double load = std::sqrt(rho);
  const double width = std::sqrt(1.0 - rho) / load;  // transition scale in u
  std::vector<double> breaks{-kFactorRange, kFactorRange};
  for (double c : cuts)
    for (double k : {-6.0, -2.0, 0.0, 2.0, 6.0}) {
      const double b = c / load + k * width;
      if (b > -kFactorRange && b < kFactorRange) breaks.push_back(b);
    }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double a, double b) { return b - a < 1e-9; }),
               breaks.end());
  const auto& gl = gauss_legendre(nodes);
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double mid = 0.5 * (breaks[p] + breaks[p + 1]);
    const double half = 0.5 * (breaks[p + 1] - breaks[p]);
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double u = mid + half * gl.nodes[k];
      rule.nodes.push_back(u);
      rule.weights.push_back(half * gl.weights[k] * normal_pdf(u));
    }
  }
  return rule;
}

}  // namespace

std::vector<double> cluster_ps_table(std::span<const double> margins, double rho, int nodes) {
  const int m = static_cast<int>(margins.size());
  if (m < 1) fail(ErrorKind::Argument, "empty cluster");
  check_rho(rho, m);
  const std::size_t count = std::size_t{1} << m;

  if (rho == 0.0 || m == 1) {
    std::vector<double> out(count, 1.0);
    for (std::size_t idx = 0; idx < count; ++idx)
      for (int j = 0; j < m; ++j) out[idx] *= index_bit(idx, j, m) ? margins[j] : 1.0 - margins[j];
    return out;
  }
  if (rho < 0.0) return pair_table(margins, rho);

  const auto cuts = latent_cuts(margins);
  const auto rule = factor_rule(cuts, rho, nodes);
  const double load = std::sqrt(rho);
  const double resid = std::sqrt(1.0 - rho);
  std::vector<double> out(count, 0.0);
  std::vector<double> level(count), next(count);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    // Conditional on the factor, individuals are independent; extend the
    // product one individual at a time, appending the least significant bit.
    std::size_t size = 1;
    level[0] = 1.0;
    for (int j = 0; j < m; ++j) {
      const double z = (load * rule.nodes[k] - cuts[j]) / resid;
      const double pj = normal_cdf(z);
      const double qj = normal_cdf(-z);
      for (std::size_t s = 0; s < size; ++s) {
        next[2 * s] = level[s] * qj;
        next[2 * s + 1] = level[s] * pj;
      }
      size *= 2;
      std::swap(level, next);
    }
    const double w = rule.weights[k];
    for (std::size_t idx = 0; idx < count; ++idx) out[idx] += w * level[idx];
  }
  return out;
}

double cluster_ps(std::span<const double> margins, double rho, const TreatmentVector& a,
                  int nodes) {
  const int m = static_cast<int>(margins.size());
  if (static_cast<int>(a.size()) != m)
    fail(ErrorKind::Argument, "treatment vector length differs from margins");
  check_rho(rho, m);
  if (rho == 0.0 || m == 1) {
    double p = 1.0;
    for (int j = 0; j < m; ++j) p *= a[j] ? margins[j] : 1.0 - margins[j];
    return p;
  }
  if (rho < 0.0) return pair_table(margins, rho)[vector_index(a)];

  const auto cuts = latent_cuts(margins);
  const auto rule = factor_rule(cuts, rho, nodes);
  const double load = std::sqrt(rho);
  const double resid = std::sqrt(1.0 - rho);
  double total = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    double prod = rule.weights[k];
    for (int j = 0; j < m; ++j) {
      // P(Z_j > c_j | u) or its complement, computed on the accurate tail.
      const double z = (load * rule.nodes[k] - cuts[j]) / resid;
      prod *= a[j] ? normal_cdf(z) : normal_cdf(-z);
    }
    total += prod;
  }
  return total;
}

ClusterPropensityView cluster_ps_view(std::span<const double> margins, double rho, int nodes) {
  return ClusterPropensityView::from_joint(cluster_ps_table(margins, rho, nodes));
}

double copula_log_likelihood(const Dataset& data, std::span<const int> clusters,
                             const std::vector<std::vector<double>>& margins, double rho,
                             int nodes) {
  double ll = 0.0;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = data.clusters[clusters[k]];
    if (c.size() < 2) continue;
    const double p = cluster_ps(margins[k], rho, c.treatments, nodes);
    ll += std::log(std::max(p, 1e-300));
  }
  return ll;
}

CopulaFit fit_copula_rho(const Dataset& data, std::span<const int> clusters,
                         const PredictiveModel& margin_model, int nodes, std::uint64_t) {
  if (nodes < 16) fail(ErrorKind::Argument, "copula quadrature needs >= 16 nodes");
  std::vector<int> usable;
  int max_m = 1;
  for (int i : clusters) {
    if (data.clusters[i].size() >= 2) {
      usable.push_back(i);
      max_m = std::max(max_m, data.clusters[i].size());
    }
  }
  if (usable.size() < 30) {
    fail(ErrorKind::Fit, "copula correlation is unidentified: need >= 30 clusters with M >= 2, got " +
                             std::to_string(usable.size()));
  }
  std::vector<std::vector<double>> margins;
  margins.reserve(usable.size());
  for (int i : usable) margins.push_back(predict_margins(margin_model, data.clusters[i]));

  CopulaFit fit;
  fit.quadrature_nodes = nodes;
  std::tie(fit.lower, fit.upper) = admissible_rho(max_m);
  auto objective = [&](double rho) {
    return copula_log_likelihood(data, usable, margins, rho, nodes);
  };
  const auto best = maximize_scalar(objective, fit.lower, fit.upper, 1e-6);
  if (!std::isfinite(best.fx)) fail(ErrorKind::Fit, "copula pseudo-likelihood is not finite");
  fit.rho = best.x;
  fit.log_likelihood = best.fx;
  // Brent never evaluates the end points; compare against them explicitly.
  for (double edge : {fit.lower, fit.upper}) {
    const double v = objective(edge);
    if (v > fit.log_likelihood) {
      fit.rho = edge;
      fit.log_likelihood = v;
    }
  }
  if (fit.rho - fit.lower < 1e-4 || fit.upper - fit.rho < 1e-4) {
    std::ostringstream os;
    os << "copula correlation estimate " << fit.rho << " is on the admissible boundary ["
       << fit.lower << ", " << fit.upper << "]";
    fit.warning = os.str();
  }
  return fit;
}

// ---------------------------------------------------------------------------

std::vector<double> threshold_row(const ClusterRecord& c, int j, int own, double peer_mean) {
  const Matrix& f = c.learner_features();
  std::vector<double> row(f.cols() + 3);
  row[0] = own;
  row[1] = peer_mean;
  for (Eigen::Index k = 0; k < f.cols(); ++k) row[2 + k] = f(j, k);
  row.back() = c.size();
  return row;
}

namespace {

double peer_mean_of(int treated_peers, int m) {
  return m > 1 ? double(treated_peers) / double(m - 1) : 0.0;
}

}  // namespace

double ThresholdModel::predict(const ClusterRecord& c, int j, int own, int treated_peers) const {
  return model_->predict(threshold_row(c, j, own, peer_mean_of(treated_peers, c.size())));
}

double ThresholdModel::predict(const ClusterRecord& c, int j, const TreatmentVector& a) const {
  int peers = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (static_cast<int>(k) != j) peers += a[k];
  return predict(c, j, a[j], peers);
}

ThresholdModel fit_threshold_regression(const BinaryLearner& learner, const Dataset& data,
                                        std::span<const int> clusters, double theta_init,
                                        std::uint64_t seed) {
  if (!std::isfinite(theta_init)) fail(ErrorKind::Argument, "initial quantile is not finite");
  int rows = 0;
  for (int i : clusters) rows += data.clusters[i].size();
  if (rows == 0) fail(ErrorKind::Fit, "threshold regression has an empty training set");

  const auto cols = data.clusters.front().learner_features().cols() + 3;
  Matrix x(rows, cols);
  std::vector<std::uint8_t> y(rows);
  int r = 0;
  for (int i : clusters) {
    const auto& c = data.clusters[i];
    const int treated = static_cast<int>(std::count(c.treatments.begin(), c.treatments.end(), 1));
    for (int j = 0; j < c.size(); ++j, ++r) {
      const auto row =
          threshold_row(c, j, c.treatments[j], peer_mean_of(treated - c.treatments[j], c.size()));
      for (Eigen::Index k = 0; k < cols; ++k) x(r, k) = row[k];
      y[r] = c.outcomes[j] <= theta_init ? 1 : 0;
    }
  }
  const auto ones = std::count(y.begin(), y.end(), std::uint8_t{1});
  if (ones == 0 || ones == rows) {
    const double p = ones == 0 ? kProbabilityClip : 1.0 - kProbabilityClip;
    return ThresholdModel(std::make_shared<ConstantModel>(p), theta_init);
  }
  return ThresholdModel(std::shared_ptr<const PredictiveModel>(learner.fit(x, y, seed)),
                        theta_init);
}

// ---------------------------------------------------------------------------

long NuisanceFit::clip_count() const {
  long total = 0;
  for (const auto& f : folds) total += f.margin_model->clip_count();
  return total;
}

std::string NuisanceFit::summary() const {
  std::ostringstream os;
  for (std::size_t l = 0; l < folds.size(); ++l) {
    os << "fold " << l + 1 << ": " << folds[l].margin_model->summary()
       << "; rho=" << folds[l].copula.rho;
    if (!folds[l].copula.warning.empty()) os << " (" << folds[l].copula.warning << ")";
    os << "\n";
  }
  return os.str();
}

NuisanceFit fit_propensity_folds(const Dataset& data, const FoldPlan& plan,
                                 const PropensityOptions& options, std::uint64_t seed) {
  const auto learner = make_learner(options.learner);
  const int nodes = options.quadrature_nodes;
  NuisanceFit fit;
  fit.plan = plan;
  fit.folds.resize(plan.folds);

  // Folds are independent; results land in fixed slots.
  std::vector<std::exception_ptr> errors(plan.folds);
#pragma omp parallel for schedule(dynamic)
  for (int l = 0; l < plan.folds; ++l) {
    try {
      const auto train = plan.training_set(l);
      auto& fold = fit.folds[l];
      fold.margin_model = fit_individual_ps(*learner, data, train, mix_seed(seed, l));
      if (options.fixed_rho) {
        fold.copula.rho = *options.fixed_rho;
        fold.copula.quadrature_nodes = nodes;
      } else {
        fold.copula = fit_copula_rho(data, train, *fold.margin_model, nodes, mix_seed(seed, l));
      }
      fold.views.resize(data.n());
      for (int i = 0; i < data.n(); ++i) {
        const auto margins = predict_margins(*fold.margin_model, data.clusters[i]);
        fold.views[i] = cluster_ps_view(margins, fold.copula.rho, nodes);
      }
    } catch (...) {
      errors[l] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return fit;
}

}  // namespace nqce
