#pragma once

#include <random>
#include <string>
#include <vector>

#include "nqce/core.hpp"
#include "nqce/nuisance.hpp"
#include "nqce/policies.hpp"

namespace testutil {

inline nqce::ClusterRecord make_cluster(const std::string& id, nqce::TreatmentVector a,
                                        std::vector<double> y, int d = 1) {
  nqce::ClusterRecord c;
  c.cluster_id = id;
  c.treatments = std::move(a);
  c.outcomes = std::move(y);
  c.covariates = nqce::Matrix::Zero(c.treatments.size(), d);
  return c;
}

// Random strictly positive joint over 2^m vectors with consistent marginals.
inline nqce::ClusterPropensityView random_view(int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> joint(std::size_t{1} << m);
  double total = 0.0;
  for (auto& p : joint) total += (p = u(rng));
  for (auto& p : joint) p /= total;
  return nqce::ClusterPropensityView::from_joint(std::move(joint));
}

inline nqce::ClusterPropensityView random_product_view(int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> margins(m);
  for (auto& p : margins) p = u(rng);
  return nqce::ClusterPropensityView::product(margins);
}

inline nqce::PolicySpec random_policy(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (kind(rng)) {
    case 0: return nqce::PolicySpec::dap(u(rng) < 0.5 ? 0 : 1);
    case 1: return nqce::PolicySpec::uap(u(rng));
    case 2: return nqce::PolicySpec::ips(0.2 + 4.8 * u(rng));
    default: return nqce::PolicySpec::cps(0.2 + 4.8 * u(rng));
  }
}

}  // namespace testutil
