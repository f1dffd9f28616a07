#pragma once

#include <string>
#include <vector>

#include "nqce/core.hpp"

namespace nqce {

enum class PolicyKind { DAP, UAP, IPS, CPS };

const char* to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& s);

/// A treatment-allocation policy H: DAP(a), UAP(alpha), IPS(delta), CPS(delta).
struct PolicySpec {
  PolicyKind kind = PolicyKind::CPS;
  double parameter = 1.0;

  static PolicySpec dap(int a) { return {PolicyKind::DAP, double(a)}; }
  static PolicySpec uap(double alpha) { return {PolicyKind::UAP, alpha}; }
  static PolicySpec ips(double delta) { return {PolicyKind::IPS, delta}; }
  static PolicySpec cps(double delta) { return {PolicyKind::CPS, delta}; }

  // Throws Argument if the parameter is outside its kind's range.
  void validate() const;
  bool depends_on_propensity() const {
    return kind == PolicyKind::IPS || kind == PolicyKind::CPS;
  }
  std::string label() const;

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

inline constexpr double kPositivityFloor = 1e-12;

/// Cluster propensity pi(a | X, M) for every a in A(M) (lexicographic order)
/// together with the individual marginals pi_j.
struct ClusterPropensityView {
  int m = 0;
  std::vector<double> joint;
  std::vector<double> marginals;

  double operator()(const TreatmentVector& a) const { return joint[vector_index(a)]; }

  // Marginals are summed from the joint so the two are exactly consistent.
  static ClusterPropensityView from_joint(std::vector<double> joint);
  // Independent individuals: pi(a) = prod_j pi_j^{a_j} (1 - pi_j)^{1 - a_j}.
  static ClusterPropensityView product(const std::vector<double>& marginals);

  // Throws Argument when a probability leaves (0,1), the joint does not sum to
  // one within 1e-8, or marginals disagree with the joint beyond 1e-8.
  void validate() const;
};

double policy_mass(const PolicySpec& spec, const TreatmentVector& a,
                   const ClusterPropensityView& ps);

/// w^{(t)}_j(a): H(a) for STAR; 1{a_j = t} * H(a_{-j}) for FIX t, where
/// H(a_{-j}) = H(0, a_{-j}) + H(1, a_{-j}). `j` is zero-based.
double weight_w(const PolicySpec& spec, EstimandKind t, int j, const TreatmentVector& a,
                const ClusterPropensityView& ps);

/// Conditional EIF of H(a_target) evaluated at the observed vector A_obs.
double cond_eif_omega(const PolicySpec& spec, const TreatmentVector& a_obs,
                      const TreatmentVector& a_target, const ClusterPropensityView& ps);

/// Omega^{(t)}_j: Omega for STAR; 1{a_j = 0} * sum_{a'} Omega(A; (a', a_{-j})) for FIX.
double cond_eif_omega_t(const PolicySpec& spec, EstimandKind t, int j,
                        const TreatmentVector& a_obs, const TreatmentVector& a,
                        const ClusterPropensityView& ps);

/// Table form of the evaluators above for one cluster, indexed by the
/// lexicographic vector index. The scalar functions are thin wrappers over it.
class PolicyTable {
 public:
  PolicyTable(const PolicySpec& spec, const ClusterPropensityView& ps);

  int size() const { return m_; }
  std::size_t count() const { return mass_.size(); }
  double mass(std::size_t idx) const { return mass_[idx]; }
  const std::vector<double>& masses() const { return mass_; }

  // H(a_{-j}) for the vector at idx.
  double peer_mass(int j, std::size_t idx) const {
    return mass_[idx] + mass_[idx ^ flip(j)];
  }
  double weight(EstimandKind t, int j, std::size_t idx) const;

  // Omega(A_obs; a) for every a.
  std::vector<double> omega_row(std::size_t obs_idx) const;
  // Omega^{(t)}_j(A_obs; a) for every a, given a row from omega_row.
  double omega_t(EstimandKind t, int j, std::size_t idx, const std::vector<double>& row) const;

  std::size_t flip(int j) const { return std::size_t{1} << (m_ - 1 - j); }

 private:
  PolicySpec spec_;
  ClusterPropensityView ps_;
  int m_;
  std::vector<double> mass_;
  std::vector<double> shifted_;  // IPS shifted marginals
};

}  // namespace nqce
