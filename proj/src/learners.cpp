#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nqce/numerics.hpp"
#include "nqce/nuisance.hpp"

namespace nqce {

double PredictiveModel::predict(std::span<const double> row) const {
  const double p = raw_predict(row);
  if (p < kProbabilityClip || p > 1.0 - kProbabilityClip || !std::isfinite(p)) {
    clips_.fetch_add(1, std::memory_order_relaxed);
    if (!(p >= kProbabilityClip)) return kProbabilityClip;
    return 1.0 - kProbabilityClip;
  }
  return p;
}

std::string ConstantModel::summary() const {
  std::ostringstream os;
  os << "constant p=" << p_;
  return os.str();
}

namespace {

void check_training(const Matrix& x, std::span<const std::uint8_t> y) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || x.rows() == 0)
    fail(ErrorKind::Fit, "feature rows and labels disagree or are empty");
  const auto ones = std::count(y.begin(), y.end(), std::uint8_t{1});
  if (ones == 0 || ones == static_cast<long>(y.size()))
    fail(ErrorKind::Fit, "degenerate labels: all " + std::string(ones == 0 ? "0" : "1"));
}

}  // namespace

std::unique_ptr<BinaryLearner> make_learner(const LearnerSpec& spec) {
  if (spec.name == "logistic") return std::make_unique<LogisticLearner>(spec);
  if (spec.name == "boosting") return std::make_unique<BoostingLearner>(spec);
  fail(ErrorKind::Config, "unknown learner '" + spec.name + "' (expected logistic or boosting)");
}

// ---------------------------------------------------------------------------

std::unique_ptr<PredictiveModel> LogisticLearner::fit(const Matrix& x,
                                                      std::span<const std::uint8_t> y,
                                                      std::uint64_t) const {
  check_training(x, y);
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();

  Eigen::VectorXd center = x.colwise().mean().transpose();
  Eigen::VectorXd scale(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double var = (x.col(k).array() - center[k]).square().sum() / double(std::max<Eigen::Index>(n - 1, 1));
    scale[k] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  Eigen::MatrixXd z(n, p + 1);
  z.col(0).setOnes();
  for (Eigen::Index k = 0; k < p; ++k) z.col(k + 1) = (x.col(k).array() - center[k]) / scale[k];
  Eigen::VectorXd label(n);
  for (Eigen::Index i = 0; i < n; ++i) label[i] = y[i];

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  beta[0] = logit(label.mean());
  Eigen::VectorXd ridge = Eigen::VectorXd::Constant(p + 1, spec_.ridge);
  ridge[0] = 0.0;

  int iter = 0;
  for (; iter < spec_.max_iter; ++iter) {
    Eigen::VectorXd eta = z * beta;
    Eigen::VectorXd prob = eta.unaryExpr([](double v) { return expit(v); });
    Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).max(1e-12).matrix();
    Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
    info.diagonal() += ridge;
    Eigen::VectorXd grad = z.transpose() * (label - prob) - ridge.cwiseProduct(beta);
    Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;
    beta += step;
    if (step.cwiseAbs().maxCoeff() < spec_.tol) {
      ++iter;
      break;
    }
  }

  std::vector<double> coef(p);
  double intercept = beta[0];
  for (Eigen::Index k = 0; k < p; ++k) {
    coef[k] = beta[k + 1] / scale[k];
    intercept -= coef[k] * center[k];
  }
  return std::make_unique<LogisticModel>(intercept, std::move(coef), iter);
}

double LogisticModel::raw_predict(std::span<const double> row) const {
  double eta = intercept_;
  for (std::size_t k = 0; k < coef_.size(); ++k) eta += coef_[k] * row[k];
  return expit(eta);
}

std::string LogisticModel::summary() const {
  std::ostringstream os;
  os << "logistic intercept=" << intercept_ << " coef=[";
  for (std::size_t k = 0; k < coef_.size(); ++k) os << (k ? "," : "") << coef_[k];
  os << "] iterations=" << iterations_;
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class BoostedTreesModel final : public PredictiveModel {
 public:
  BoostedTreesModel(double base, std::vector<std::vector<TreeNode>> trees)
      : base_(base), trees_(std::move(trees)) {}

  std::string summary() const override {
    std::ostringstream os;
    os << "boosting base_score=" << base_ << " trees=" << trees_.size();
    return os.str();
  }

 protected:
  double raw_predict(std::span<const double> row) const override {
    double score = base_;
    for (const auto& tree : trees_) {
      int k = 0;
      while (tree[k].feature >= 0)
        k = row[tree[k].feature] <= tree[k].threshold ? tree[k].left : tree[k].right;
      score += tree[k].value;
    }
    return expit(score);
  }

 private:
  double base_;
  std::vector<std::vector<TreeNode>> trees_;
};

struct Split {
  double gain = 0.0;
  int feature = -1;
  int bin = -1;
};

}  // namespace

std::unique_ptr<PredictiveModel> BoostingLearner::fit(const Matrix& x,
                                                      std::span<const std::uint8_t> y,
                                                      std::uint64_t) const {
  check_training(x, y);
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  const double lambda = spec_.lambda;
  constexpr double kMinHessian = 1e-3;

  // Quantile bins per feature; bin b covers (thr[b-1], thr[b]].
  std::vector<std::vector<double>> thresholds(p);
  std::vector<std::vector<std::uint16_t>> bins(p, std::vector<std::uint16_t>(n));
  for (int k = 0; k < p; ++k) {
    std::vector<double> vals(n);
    for (int i = 0; i < n; ++i) vals[i] = x(i, k);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    auto& thr = thresholds[k];
    const int u = static_cast<int>(vals.size());
    if (u <= spec_.max_bins) {
      for (int b = 0; b + 1 < u; ++b) thr.push_back(0.5 * (vals[b] + vals[b + 1]));
    } else {
      for (int b = 1; b < spec_.max_bins; ++b) {
        const int pos = static_cast<int>(std::floor(double(b) * u / spec_.max_bins));
        thr.push_back(0.5 * (vals[pos - 1] + vals[pos]));
      }
      thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
    }
    for (int i = 0; i < n; ++i) {
      bins[k][i] = static_cast<std::uint16_t>(
          std::lower_bound(thr.begin(), thr.end(), x(i, k)) - thr.begin());
    }
  }

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  const double base = logit(mean);
  std::vector<double> score(n, base), grad(n), hess(n);

  auto best_split = [&](const std::vector<int>& rows, double g_tot, double h_tot) {
    Split best;
    const double parent = g_tot * g_tot / (h_tot + lambda);
    for (int k = 0; k < p; ++k) {
      const int nb = static_cast<int>(thresholds[k].size()) + 1;
      if (nb < 2) continue;
      std::vector<double> gh(2 * nb, 0.0);
      for (int i : rows) {
        gh[2 * bins[k][i]] += grad[i];
        gh[2 * bins[k][i] + 1] += hess[i];
      }
      double gl = 0.0, hl = 0.0;
      for (int b = 0; b + 1 < nb; ++b) {
        gl += gh[2 * b];
        hl += gh[2 * b + 1];
        const double gr = g_tot - gl, hr = h_tot - hl;
        if (hl < kMinHessian || hr < kMinHessian) continue;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > best.gain + 1e-12) best = {gain, k, b};
      }
    }
    return best;
  };

  std::vector<std::vector<TreeNode>> trees;
  trees.reserve(spec_.rounds);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  for (int round = 0; round < spec_.rounds; ++round) {
    for (int i = 0; i < n; ++i) {
      const double pr = expit(score[i]);
      grad[i] = pr - y[i];
      hess[i] = std::max(pr * (1.0 - pr), 1e-12);
    }
    std::vector<TreeNode> tree;
    // Grow to depth two: the root and each of its children may split once.
    struct Pending {
      int node;
      std::vector<int> rows;
      int depth;
    };
    std::vector<Pending> stack;
    tree.push_back({});
    stack.push_back({0, all, 0});
    while (!stack.empty()) {
      Pending cur = std::move(stack.back());
      stack.pop_back();
      double g = 0.0, h = 0.0;
      for (int i : cur.rows) {
        g += grad[i];
        h += hess[i];
      }
      Split s;
      if (cur.depth < 2) s = best_split(cur.rows, g, h);
      if (s.feature < 0) {
        tree[cur.node].value = -spec_.learning_rate * g / (h + lambda);
        for (int i : cur.rows) score[i] += tree[cur.node].value;
        continue;
      }
      std::vector<int> left, right;
      for (int i : cur.rows) (bins[s.feature][i] <= s.bin ? left : right).push_back(i);
      const int li = static_cast<int>(tree.size());
      tree.push_back({});
      tree.push_back({});
      tree[cur.node].feature = s.feature;
      tree[cur.node].threshold = thresholds[s.feature][s.bin];
      tree[cur.node].left = li;
      tree[cur.node].right = li + 1;
      stack.push_back({li + 1, std::move(right), cur.depth + 1});
      stack.push_back({li, std::move(left), cur.depth + 1});
    }
    trees.push_back(std::move(tree));
  }
  return std::make_unique<BoostedTreesModel>(base, std::move(trees));
}

}  // namespace nqce
