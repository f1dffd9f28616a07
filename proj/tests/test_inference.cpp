#include <doctest.h>

#include <cmath>
#include <random>

#include "nqce/errors.hpp"
#include "nqce/inference.hpp"
#include "nqce/numerics.hpp"

using namespace nqce;

namespace {

Matrix gaussian_scores(int n, int g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Matrix s(n, g);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < g; ++k) s(i, k) = z(rng);
  return s;
}

QuantileEstimate fake_estimate(double theta, double sigma, int n) {
  QuantileEstimate e;
  e.theta_hat = theta;
  e.sigma_hat = sigma;
  e.n_clusters = n;
  return e;
}

}  // namespace

TEST_CASE("pointwise intervals") {
  const auto e = fake_estimate(3.0, 1.0, 100);  // sigma/sqrt(n) = 0.1
  const auto ci = pointwise_ci(e, 0.05);
  CHECK(ci.hi - 3.0 == doctest::Approx(0.1959964).epsilon(1e-6));
  CHECK(3.0 - ci.lo == doctest::Approx(0.1959964).epsilon(1e-6));
  const auto flat = pointwise_ci(fake_estimate(2.0, 0.0, 10), 0.05);
  CHECK(flat.lo == 2.0);
  CHECK(flat.hi == 2.0);
  const auto one = pointwise_ci(e, 1.0);
  CHECK(one.lo == 3.0);
  CHECK(one.hi == 3.0);
  CHECK_THROWS_AS(pointwise_ci(e, 0.0), Error);
  CHECK_THROWS_AS(pointwise_ci(fake_estimate(0.0, NAN, 5), 0.1), Error);
}

TEST_CASE("single-point band recovers the normal critical value") {
  const Matrix s = gaussian_scores(2000, 1, 1);
  // sigma from the scores themselves so the statistic is standardized
  const double sigma = std::sqrt(s.col(0).squaredNorm() / s.rows());
  const std::vector<double> grid{0.5}, est{1.0}, sig{sigma};
  BandOptions opt;
  opt.draws = 5000;
  opt.seed = 11;
  const auto band = uniform_band(grid, est, sig, s, opt);
  CHECK(std::abs(band.c_alpha - 1.96) < 0.05);
  CHECK(band.uniform_hi[0] - band.estimate[0] ==
        doctest::Approx(band.c_alpha * sigma / std::sqrt(2000.0)));
}

TEST_CASE("duplicated scores give the single-point critical value") {
  const Matrix s = gaussian_scores(500, 1, 2);
  Matrix dup(500, 2);
  dup.col(0) = s.col(0);
  dup.col(1) = s.col(0);
  BandOptions opt;
  opt.draws = 2000;
  opt.seed = 3;
  const std::vector<double> g1{0.5}, e1{0.0}, s1{1.0};
  const std::vector<double> g2{0.4, 0.6}, e2{0.0, 0.0}, s2{1.0, 1.0};
  const auto one = uniform_band(g1, e1, s1, s, opt);
  const auto two = uniform_band(g2, e2, s2, dup, opt);
  // same multipliers, identical columns: the sups coincide draw by draw
  CHECK(one.c_alpha == two.c_alpha);
}

TEST_CASE("property: sup dominates coordinates, monotone in alpha, deterministic") {
  const Matrix s = gaussian_scores(300, 6, 4);
  const std::vector<double> grid{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const std::vector<double> est(6, 0.0), sig(6, 1.0);
  BandOptions opt;
  opt.draws = 1000;
  opt.seed = 5;
  double last = INFINITY;
  for (double alpha : {0.01, 0.05, 0.1}) {
    opt.alpha = alpha;
    const auto band = uniform_band(grid, est, sig, s, opt);
    CHECK(band.c_alpha <= last);
    last = band.c_alpha;
    CHECK(band.c_alpha == uniform_band(grid, est, sig, s, opt).c_alpha);
    for (int g = 0; g < 6; ++g) {
      const Matrix col = s.col(g);
      const std::vector<double> g1{grid[g]}, e1{0.0}, s1{1.0};
      CHECK(band.c_alpha >= uniform_band(g1, e1, s1, col, opt).c_alpha);
      CHECK(band.contains_pointwise);
      CHECK(band.uniform_lo[g] <= band.pointwise_lo[g]);
      CHECK(band.uniform_hi[g] >= band.pointwise_hi[g]);
    }
  }
  opt.alpha = 0.05;
  opt.seed = 6;
  CHECK(uniform_band(grid, est, sig, s, opt).c_alpha != last);
}

TEST_CASE("band argument checks and zero-sigma exclusion") {
  const Matrix s = gaussian_scores(100, 3, 7);
  const std::vector<double> grid{1.0, 2.0, 3.0}, est{0.0, 1.0, 2.0};
  BandOptions opt;
  const std::vector<double> sig{1.0, 0.0, 1.0};
  const auto band = uniform_band(grid, est, sig, s, opt);
  CHECK(band.warnings.size() == 1);
  CHECK(band.uniform_lo[1] == 1.0);
  CHECK(band.uniform_hi[1] == 1.0);

  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(uniform_band(two, est, sig, s, opt), Error);
  const std::vector<double> unsorted{2.0, 1.0, 3.0};
  CHECK_THROWS_AS(uniform_band(unsorted, est, sig, s, opt), Error);
  opt.draws = 199;
  CHECK_THROWS_AS(uniform_band(grid, est, sig, s, opt), Error);
  opt.draws = 1000;
  const std::vector<double> zeros(3, 0.0);
  try {
    uniform_band(grid, est, zeros, s, opt);
    FAIL("expected variance error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Variance);
  }
}

TEST_CASE("bands from estimates and effects use the stored scores") {
  const Matrix s = gaussian_scores(200, 2, 8);
  std::vector<QuantileEstimate> ests;
  for (int g = 0; g < 2; ++g) {
    auto e = fake_estimate(g, 0.0, 200);
    for (int i = 0; i < 200; ++i) e.eif_scores.push_back(s(i, g));
    e.sigma_hat = std::sqrt(s.col(g).squaredNorm() / 200.0);
    ests.push_back(e);
  }
  const std::vector<double> grid{0.4, 0.6};
  BandOptions opt;
  const auto band = uniform_band(grid, std::span<const QuantileEstimate>(ests), opt);
  const std::vector<double> est{0.0, 1.0}, sig{ests[0].sigma_hat, ests[1].sigma_hat};
  CHECK(band.c_alpha == uniform_band(grid, est, sig, s, opt).c_alpha);
  CHECK(band.estimates.size() == 2);

  std::vector<EffectEstimate> effs{contrast(EffectKind::OQE, ests[1], ests[0])};
  const std::vector<double> g1{0.5};
  const auto eb = uniform_band(g1, std::span<const EffectEstimate>(effs), opt);
  CHECK(eb.estimate[0] == 1.0);
  CHECK(eb.sigma[0] == effs[0].sigma);

  ests[1].eif_scores.pop_back();
  CHECK_THROWS_AS(uniform_band(grid, std::span<const QuantileEstimate>(ests), opt), Error);
  ests[1].eif_scores.clear();
  CHECK_THROWS_AS(uniform_band(grid, std::span<const QuantileEstimate>(ests), opt), Error);
}
