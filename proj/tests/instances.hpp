#pragma once

#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "nqce/estimators.hpp"

namespace testutil {

// Small random datasets with arbitrary (not fitted) nuisances.
struct SmallInstance {
  nqce::Dataset data;
  std::vector<nqce::ClusterPropensityView> views;
  std::vector<nqce::ThresholdPredictions> mhat;
};

inline SmallInstance random_instance(std::mt19937_64& rng, int max_n = 10, int max_m = 3) {
  std::uniform_int_distribution<int> nd(1, max_n), md(1, max_m);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.05, 0.95);
  SmallInstance inst;
  std::vector<nqce::ClusterRecord> clusters;
  const int n = nd(rng);
  for (int i = 0; i < n; ++i) {
    const int m = md(rng);
    nqce::TreatmentVector a(m);
    std::vector<double> y(m);
    for (int j = 0; j < m; ++j) {
      a[j] = u(rng) < 0.5;
      y[j] = 3.0 + 2.0 * z(rng);
    }
    clusters.push_back(make_cluster("c" + std::to_string(i), a, y));
    inst.views.push_back(random_view(m, rng));
    nqce::ThresholdPredictions p;
    p.m = m;
    p.values.resize(std::size_t(m) * 2 * m);
    for (auto& v : p.values) v = u(rng);
    inst.mhat.push_back(p);
  }
  inst.data = nqce::require_valid(std::move(clusters), {"x1"});
  return inst;
}

}  // namespace testutil
