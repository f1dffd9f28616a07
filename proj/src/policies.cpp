#include "nqce/policies.hpp"

#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nqce {

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::DAP: return "DAP";
    case PolicyKind::UAP: return "UAP";
    case PolicyKind::IPS: return "IPS";
    case PolicyKind::CPS: return "CPS";
  }
  return "?";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "DAP" || s == "dap") return PolicyKind::DAP;
  if (s == "UAP" || s == "uap") return PolicyKind::UAP;
  if (s == "IPS" || s == "ips") return PolicyKind::IPS;
  if (s == "CPS" || s == "cps") return PolicyKind::CPS;
  fail(ErrorKind::Config, "unknown policy kind '" + s + "' (expected DAP, UAP, IPS or CPS)");
}

void PolicySpec::validate() const {
  switch (kind) {
    case PolicyKind::DAP:
      if (parameter != 0.0 && parameter != 1.0)
        fail(ErrorKind::Argument, "DAP parameter must be 0 or 1");
      break;
    case PolicyKind::UAP:
      if (!(parameter >= 0.0 && parameter <= 1.0))
        fail(ErrorKind::Argument, "UAP alpha must lie in [0,1]");
      break;
    case PolicyKind::IPS:
    case PolicyKind::CPS:
      if (!(parameter > 0.0) || !std::isfinite(parameter))
        fail(ErrorKind::Argument, std::string(to_string(kind)) + " delta must be positive");
      break;
  }
}

std::string PolicySpec::label() const {
  std::ostringstream os;
  os << to_string(kind) << "(" << parameter << ")";
  return os.str();
}

ClusterPropensityView ClusterPropensityView::from_joint(std::vector<double> joint) {
  ClusterPropensityView v;
  const auto count = joint.size();
  int m = 0;
  while ((std::size_t{1} << m) < count) ++m;
  if ((std::size_t{1} << m) != count || m < 1)
    fail(ErrorKind::Argument, "joint propensity table size must be 2^M");
  v.m = m;
  v.marginals.assign(m, 0.0);
  for (std::size_t idx = 0; idx < count; ++idx)
    for (int j = 0; j < m; ++j)
      if (index_bit(idx, j, m)) v.marginals[j] += joint[idx];
  v.joint = std::move(joint);
  return v;
}

ClusterPropensityView ClusterPropensityView::product(const std::vector<double>& marginals) {
  const int m = static_cast<int>(marginals.size());
  std::vector<double> joint(std::size_t{1} << m, 1.0);
  for (std::size_t idx = 0; idx < joint.size(); ++idx)
    for (int j = 0; j < m; ++j)
      joint[idx] *= index_bit(idx, j, m) ? marginals[j] : 1.0 - marginals[j];
  ClusterPropensityView v;
  v.m = m;
  v.joint = std::move(joint);
  v.marginals = marginals;
  return v;
}

void ClusterPropensityView::validate() const {
  if (joint.size() != (std::size_t{1} << m) || marginals.size() != std::size_t(m))
    fail(ErrorKind::Argument, "propensity view dimensions inconsistent with M");
  double total = 0.0;
  for (double p : joint) {
    if (!(p > 0.0 && p < 1.0))
      fail(ErrorKind::Argument, "cluster propensity outside (0,1)");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-8) fail(ErrorKind::Argument, "cluster propensity does not sum to 1");
  std::vector<double> implied(m, 0.0);
  for (std::size_t idx = 0; idx < joint.size(); ++idx)
    for (int j = 0; j < m; ++j)
      if (index_bit(idx, j, m)) implied[j] += joint[idx];
  for (int j = 0; j < m; ++j)
    if (std::abs(implied[j] - marginals[j]) > 1e-8)
      fail(ErrorKind::Argument, "marginal propensity inconsistent with joint");
}

namespace {

void require_interior(double p, const char* what) {
  if (!(p >= kPositivityFloor && p <= 1.0 - kPositivityFloor)) {
    fail(ErrorKind::Positivity, std::string(what) + " outside positivity bounds [1e-12, 1-1e-12]");
  }
}

}  // namespace

PolicyTable::PolicyTable(const PolicySpec& spec, const ClusterPropensityView& ps)
    : spec_(spec), ps_(ps), m_(ps.m), mass_(std::size_t{1} << ps.m) {
  const std::size_t count = mass_.size();
  switch (spec.kind) {
    case PolicyKind::DAP: {
      std::fill(mass_.begin(), mass_.end(), 0.0);
      mass_[spec.parameter == 1.0 ? count - 1 : 0] = 1.0;
      break;
    }
    case PolicyKind::UAP: {
      const double alpha = spec.parameter;
      for (std::size_t idx = 0; idx < count; ++idx) {
        double p = 1.0;
        for (int j = 0; j < m_; ++j) p *= index_bit(idx, j, m_) ? alpha : 1.0 - alpha;
        mass_[idx] = p;
      }
      break;
    }
    case PolicyKind::IPS: {
      const double delta = spec.parameter;
      shifted_.resize(m_);
      for (int j = 0; j < m_; ++j) {
        const double pj = ps_.marginals[j];
        require_interior(pj, "individual propensity");
        shifted_[j] = delta * pj / (1.0 - pj + delta * pj);
      }
      for (std::size_t idx = 0; idx < count; ++idx) {
        double p = 1.0;
        for (int j = 0; j < m_; ++j) p *= index_bit(idx, j, m_) ? shifted_[j] : 1.0 - shifted_[j];
        mass_[idx] = p;
      }
      break;
    }
    case PolicyKind::CPS: {
      const double delta = spec.parameter;
      double norm = 0.0;
      for (std::size_t idx = 0; idx < count; ++idx) {
        const int s = std::popcount(idx);
        mass_[idx] = std::pow(delta, s) * ps_.joint[idx];
        norm += mass_[idx];
      }
      if (!(norm > 0.0) || !std::isfinite(norm))
        fail(ErrorKind::Positivity, "CPS normalizing constant is zero");
      for (auto& v : mass_) v /= norm;
      break;
    }
  }
}

double PolicyTable::weight(EstimandKind t, int j, std::size_t idx) const {
  if (t == EstimandKind::Star) return mass_[idx];
  if (index_bit(idx, j, m_) != fixed_treatment(t)) return 0.0;
  return peer_mass(j, idx);
}

std::vector<double> PolicyTable::omega_row(std::size_t obs_idx) const {
  const std::size_t count = mass_.size();
  std::vector<double> row(count, 0.0);
  switch (spec_.kind) {
    case PolicyKind::DAP:
    case PolicyKind::UAP:
      break;
    case PolicyKind::IPS: {
      const double delta = spec_.parameter;
      // Per-individual factor delta (A_j - pi_j) / (delta pi_j + 1 - pi_j)^2,
      // divided by the shifted probability of the target's own entry.
      std::vector<double> num(m_);
      for (int j = 0; j < m_; ++j) {
        const double pj = ps_.marginals[j];
        const double denom = delta * pj + 1.0 - pj;
        num[j] = delta * (double(index_bit(obs_idx, j, m_)) - pj) / (denom * denom);
      }
      for (std::size_t idx = 0; idx < count; ++idx) {
        double s = 0.0;
        for (int j = 0; j < m_; ++j) {
          s += index_bit(idx, j, m_) ? num[j] / shifted_[j] : -num[j] / (1.0 - shifted_[j]);
        }
        row[idx] = mass_[idx] * s;
      }
      break;
    }
    case PolicyKind::CPS: {
      const double pi_obs = ps_.joint[obs_idx];
      require_interior(pi_obs, "cluster propensity of the observed vector");
      const double ratio_obs = mass_[obs_idx] / pi_obs;
      for (std::size_t idx = 0; idx < count; ++idx) {
        const double ind = idx == obs_idx ? 1.0 / pi_obs : 0.0;
        row[idx] = mass_[idx] * (ind - ratio_obs);
      }
      break;
    }
  }
  return row;
}

double PolicyTable::omega_t(EstimandKind t, int j, std::size_t idx,
                            const std::vector<double>& row) const {
  if (t == EstimandKind::Star) return row[idx];
  if (index_bit(idx, j, m_) != 0) return 0.0;
  return row[idx] + row[idx ^ flip(j)];
}

namespace {

void check_vector(const TreatmentVector& a, const ClusterPropensityView& ps) {
  if (static_cast<int>(a.size()) != ps.m)
    fail(ErrorKind::Argument, "treatment vector length differs from cluster size");
}

}  // namespace

double policy_mass(const PolicySpec& spec, const TreatmentVector& a,
                   const ClusterPropensityView& ps) {
  spec.validate();
  check_vector(a, ps);
  return PolicyTable(spec, ps).mass(vector_index(a));
}

double weight_w(const PolicySpec& spec, EstimandKind t, int j, const TreatmentVector& a,
                const ClusterPropensityView& ps) {
  spec.validate();
  check_vector(a, ps);
  if (j < 0 || j >= ps.m) fail(ErrorKind::Argument, "individual index out of range");
  return PolicyTable(spec, ps).weight(t, j, vector_index(a));
}

double cond_eif_omega(const PolicySpec& spec, const TreatmentVector& a_obs,
                      const TreatmentVector& a_target, const ClusterPropensityView& ps) {
  spec.validate();
  check_vector(a_obs, ps);
  check_vector(a_target, ps);
  return PolicyTable(spec, ps).omega_row(vector_index(a_obs))[vector_index(a_target)];
}

double cond_eif_omega_t(const PolicySpec& spec, EstimandKind t, int j,
                        const TreatmentVector& a_obs, const TreatmentVector& a,
                        const ClusterPropensityView& ps) {
  spec.validate();
  check_vector(a_obs, ps);
  check_vector(a, ps);
  if (j < 0 || j >= ps.m) fail(ErrorKind::Argument, "individual index out of range");
  PolicyTable table(spec, ps);
  return table.omega_t(t, j, vector_index(a), table.omega_row(vector_index(a_obs)));
}

}  // namespace nqce
