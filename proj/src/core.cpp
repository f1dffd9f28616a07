#include "nqce/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace nqce {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Positivity: return "positivity";
    case ErrorKind::Overlap: return "overlap";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Variance: return "variance";
    case ErrorKind::Fit: return "fit";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

int Dataset::total_individuals() const {
  int total = 0;
  for (const auto& c : clusters) total += c.size();
  return total;
}

int Dataset::max_cluster_size() const {
  int m = 0;
  for (const auto& c : clusters) m = std::max(m, c.size());
  return m;
}

const char* to_string(EstimandKind t) {
  switch (t) {
    case EstimandKind::Star: return "star";
    case EstimandKind::Fix0: return "0";
    case EstimandKind::Fix1: return "1";
  }
  return "?";
}

EstimandKind estimand_from_string(const std::string& s) {
  if (s == "star" || s == "STAR" || s == "*") return EstimandKind::Star;
  if (s == "0" || s == "FIX0" || s == "fix0") return EstimandKind::Fix0;
  if (s == "1" || s == "FIX1" || s == "fix1") return EstimandKind::Fix1;
  fail(ErrorKind::Config, "unknown estimand '" + s + "' (expected star, 0 or 1)");
}

std::vector<TreatmentVector> enumerate_treatment_vectors(int m, int max_cluster_size) {
  if (m < 1) fail(ErrorKind::Argument, "cluster size must be positive");
  if (m > max_cluster_size) {
    fail(ErrorKind::Capacity, "cluster size " + std::to_string(m) +
                                  " exceeds max_cluster_size cap " +
                                  std::to_string(max_cluster_size));
  }
  const std::size_t count = std::size_t{1} << m;
  std::vector<TreatmentVector> out(count, TreatmentVector(m));
  for (std::size_t idx = 0; idx < count; ++idx) {
    for (int j = 0; j < m; ++j) out[idx][j] = static_cast<std::uint8_t>(index_bit(idx, j, m));
  }
  return out;
}

std::vector<int> FoldPlan::training_set(int l) const {
  std::vector<int> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    if (assignment[i] != l) out.push_back(i);
  return out;
}

FoldPlan partition_folds(int n, int folds, std::uint64_t seed) {
  if (folds < 3) fail(ErrorKind::Argument, "three-way cross-fitting needs L >= 3");
  if (n < folds) fail(ErrorKind::Argument, "need at least L clusters (n < L)");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  FoldPlan plan;
  plan.n = n;
  plan.folds = folds;
  plan.assignment.assign(n, -1);
  plan.eval.assign(folds, {});
  for (int k = 0; k < n; ++k) plan.assignment[order[k]] = k % folds;
  for (int i = 0; i < n; ++i) plan.eval[plan.assignment[i]].push_back(i);

  // Labels below are 1-based to mirror the split rule; storage is 0-based.
  const int half = folds / 2;
  plan.ipw_set.assign(folds, {});
  plan.outcome_set.assign(folds, {});
  for (int l = 1; l <= folds; ++l) {
    const int shift = l <= half ? 1 : 0;
    const int cut = half + shift;
    for (int k = 1; k <= folds; ++k) {
      if (k == l) continue;
      auto& target = k <= cut ? plan.ipw_set[l - 1] : plan.outcome_set[l - 1];
      target.insert(target.end(), plan.eval[k - 1].begin(), plan.eval[k - 1].end());
    }
    std::sort(plan.ipw_set[l - 1].begin(), plan.ipw_set[l - 1].end());
    std::sort(plan.outcome_set[l - 1].begin(), plan.outcome_set[l - 1].end());
  }
  return plan;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& issue : issues) {
    os << "cluster '" << issue.cluster_id << "' field " << issue.field << ": "
       << issue.message << "\n";
  }
  return os.str();
}

ValidationResult validate_dataset(std::vector<ClusterRecord> clusters,
                                  std::vector<std::string> covariate_names) {
  if (clusters.empty()) fail(ErrorKind::Argument, "dataset has no clusters");

  ValidationResult result;
  auto& issues = result.report.issues;
  const auto d = static_cast<Eigen::Index>(covariate_names.size());
  std::unordered_set<std::string> seen;

  for (const auto& c : clusters) {
    const auto add = [&](const std::string& field, const std::string& msg) {
      issues.push_back({c.cluster_id, field, msg});
    };
    if (!seen.insert(c.cluster_id).second) add("cluster_id", "duplicate cluster_id");

    const auto m = static_cast<Eigen::Index>(c.treatments.size());
    if (m < 1) add("M", "cluster must have at least one individual");
    if (c.covariates.rows() != m)
      add("X", "covariate rows " + std::to_string(c.covariates.rows()) +
                   " != cluster size " + std::to_string(m));
    if (c.covariates.cols() != d)
      add("X", "covariate dimension " + std::to_string(c.covariates.cols()) +
                   " != " + std::to_string(d));
    if (static_cast<Eigen::Index>(c.outcomes.size()) != m)
      add("Y", "outcome count " + std::to_string(c.outcomes.size()) +
                   " != cluster size " + std::to_string(m));
    if (c.features.size() != 0 && c.features.rows() != m)
      add("features", "feature rows do not match cluster size");
    for (std::size_t j = 0; j < c.treatments.size(); ++j) {
      if (c.treatments[j] > 1)
        add("A", "unit " + std::to_string(j + 1) + " has treatment " +
                     std::to_string(int(c.treatments[j])) + " (expected 0 or 1)");
    }
    for (std::size_t j = 0; j < c.outcomes.size(); ++j) {
      if (!std::isfinite(c.outcomes[j]))
        add("Y", "unit " + std::to_string(j + 1) + " has non-finite outcome");
    }
    if (!c.covariates.allFinite()) add("X", "non-finite covariate");
  }

  if (result.report.ok()) {
    result.dataset = Dataset{std::move(clusters), std::move(covariate_names)};
  }
  return result;
}

Dataset require_valid(std::vector<ClusterRecord> clusters,
                      std::vector<std::string> covariate_names) {
  auto result = validate_dataset(std::move(clusters), std::move(covariate_names));
  if (!result.report.ok()) fail(ErrorKind::Validation, result.report.to_string());
  return std::move(*result.dataset);
}

}  // namespace nqce
