#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nqce/errors.hpp"

namespace nqce {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One binary treatment vector, a_1 first. Entries are 0 or 1.
using TreatmentVector = std::vector<std::uint8_t>;

inline constexpr int kDefaultMaxClusterSize = 15;

/// One cluster O_i = {M, X, A, Y}.
///
/// `features` is the covariate view handed to learners. It defaults to the
/// covariates themselves; transformed views (e.g. misspecified feature maps in
/// simulation) replace it without touching the data-generating covariates.
struct ClusterRecord {
  std::string cluster_id;
  Matrix covariates;  // M x d
  TreatmentVector treatments;
  std::vector<double> outcomes;
  Matrix features;  // M x d', empty means "same as covariates"

  int size() const { return static_cast<int>(treatments.size()); }
  const Matrix& learner_features() const {
    return features.size() == 0 ? covariates : features;
  }
};

struct Dataset {
  std::vector<ClusterRecord> clusters;
  std::vector<std::string> covariate_names;

  int n() const { return static_cast<int>(clusters.size()); }
  int dim() const { return static_cast<int>(covariate_names.size()); }
  int total_individuals() const;
  int max_cluster_size() const;
};

enum class EstimandKind { Star, Fix0, Fix1 };

const char* to_string(EstimandKind t);
EstimandKind estimand_from_string(const std::string& s);

// Own-treatment value for FIX estimands.
inline int fixed_treatment(EstimandKind t) { return t == EstimandKind::Fix1 ? 1 : 0; }

struct FoldPlan {
  int n = 0;
  int folds = 0;
  std::vector<int> assignment;             // cluster index -> fold label in 0..L-1
  std::vector<std::vector<int>> eval;      // D_l
  std::vector<std::vector<int>> ipw_set;   // I_{l,1}
  std::vector<std::vector<int>> outcome_set;  // I_{l,2}

  // Everything except D_l.
  std::vector<int> training_set(int l) const;
};

/// All 2^M binary vectors in lexicographic order (a_1 most significant).
std::vector<TreatmentVector> enumerate_treatment_vectors(
    int m, int max_cluster_size = kDefaultMaxClusterSize);

// Position of `a` in the lexicographic enumeration.
inline std::size_t vector_index(const TreatmentVector& a) {
  std::size_t idx = 0;
  for (auto v : a) idx = (idx << 1) | (v & 1u);
  return idx;
}

// Bit of individual j (0-based) inside a lexicographic index for size m.
inline int index_bit(std::size_t idx, int j, int m) {
  return static_cast<int>((idx >> (m - 1 - j)) & 1u);
}

FoldPlan partition_folds(int n, int folds, std::uint64_t seed);

struct ValidationIssue {
  std::string cluster_id;
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string to_string() const;
};

struct ValidationResult {
  std::optional<Dataset> dataset;
  ValidationReport report;
};

/// Checks every ClusterRecord/Dataset invariant and collects all violations.
ValidationResult validate_dataset(std::vector<ClusterRecord> clusters,
                                  std::vector<std::string> covariate_names);

// Convenience: validate or throw a Validation error carrying the report.
Dataset require_valid(std::vector<ClusterRecord> clusters,
                      std::vector<std::string> covariate_names);

}  // namespace nqce
