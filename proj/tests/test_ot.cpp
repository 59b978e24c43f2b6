#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "liperm/ot.hpp"
#include "liperm/rate_study.hpp"
#include "support/lp_oracle.hpp"

using namespace liperm;
using ot::DiscreteMeasure;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

DiscreteMeasure random_measure(int d, int n, Rng& rng, bool random_weights) {
  MatrixXd pts(d, n);
  for (long i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform01();
  VectorXd w(n);
  if (random_weights) {
    for (int i = 0; i < n; ++i) w[i] = rng.uniform(0.05, 1.0);
    w /= w.sum();
  } else {
    w.setConstant(1.0 / n);
  }
  return {pts, w};
}

void check_marginals(const ot::W1Result& res, const DiscreteMeasure& mu,
                     const DiscreteMeasure& nu) {
  VectorXd row = VectorXd::Zero(mu.size());
  VectorXd col = VectorXd::Zero(nu.size());
  double cost = 0.0;
  for (const auto& f : res.plan.flows) {
    row[f.source] += f.mass;
    col[f.target] += f.mass;
    cost += f.mass * (mu.points().col(f.source) - nu.points().col(f.target)).norm();
  }
  CHECK((row - mu.weights()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((col - nu.weights()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(cost == doctest::Approx(res.cost).epsilon(1e-12));
}

}  // namespace

TEST_CASE("identical measures have zero cost") {
  Rng rng(1);
  const auto mu = random_measure(2, 5, rng, true);
  const auto res = ot::exact_w1(mu, mu);
  CHECK(res.cost == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single-atom transport in 1D costs the distance") {
  const auto a = DiscreteMeasure::dirac(VectorXd::Zero(1));
  const auto b = DiscreteMeasure::dirac(VectorXd::Ones(1));
  const auto res = ot::exact_w1(a, b);
  CHECK(res.cost == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(res.plan.flows.size() == 1);
  CHECK(res.plan.flows[0].mass == doctest::Approx(1.0));
}

TEST_CASE("uniform on {0,1} vs dirac at 0.5 costs 0.5 (LP oracle)") {
  MatrixXd pts(1, 2);
  pts << 0.0, 1.0;
  const auto mu = DiscreteMeasure::uniform_atoms(pts);
  VectorXd half(1);
  half << 0.5;
  const auto nu = DiscreteMeasure::dirac(half);
  const auto res = ot::exact_w1(mu, nu);
  const double lp = testing::lp_w1(mu, nu);
  CHECK(res.cost == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(res.cost == doctest::Approx(lp).epsilon(1e-10));
}

TEST_CASE("network simplex matches the coupling LP on random small instances") {
  Rng rng(20240501);
  for (int rep = 0; rep < 60; ++rep) {
    const int d = 1 + static_cast<int>(rng.below(3));
    const int m = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(6));
    const auto mu = random_measure(d, m, rng, rep % 2 == 0);
    const auto nu = random_measure(d, n, rng, rep % 3 == 0);
    const auto res = ot::exact_w1(mu, nu);
    const double lp = testing::lp_w1(mu, nu);
    CHECK(std::abs(res.cost - lp) < 1e-9);
    check_marginals(res, mu, nu);
  }
}

TEST_CASE("metric axioms on random small measures") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 2;
    const auto a = random_measure(d, 4, rng, true);
    const auto b = random_measure(d, 5, rng, true);
    const auto c = random_measure(d, 3, rng, true);
    const double ab = ot::exact_w1(a, b).cost;
    const double ba = ot::exact_w1(b, a).cost;
    const double ac = ot::exact_w1(a, c).cost;
    const double cb = ot::exact_w1(c, b).cost;
    CHECK(std::abs(ab - ba) < 1e-9);          // symmetry
    CHECK(ab <= ac + cb + 1e-9);              // triangle inequality
  }
}

TEST_CASE("zero iff equal supports and weights after deduplication") {
  MatrixXd pts(1, 3);
  pts << 0.2, 0.2, 0.8;
  VectorXd w(3);
  w << 0.25, 0.25, 0.5;
  const auto dup = DiscreteMeasure(pts, w).deduplicated();

  MatrixXd pts2(1, 2);
  pts2 << 0.2, 0.8;
  VectorXd w2(2);
  w2 << 0.5, 0.5;
  const DiscreteMeasure clean(pts2, w2);

  CHECK(ot::exact_w1(dup, clean).cost < 1e-12);

  // different weights on the same support must cost something
  VectorXd w3(2);
  w3 << 0.25, 0.75;
  const DiscreteMeasure shifted(pts2, w3);
  CHECK(ot::exact_w1(clean, shifted).cost > 1e-3);
}

TEST_CASE("support product over the cap raises a resource error") {
  const auto mu = ot::sample_uniform(2, 100, 1);
  const auto nu = ot::sample_uniform(2, 100, 2);
  ot::ExactW1Options opts;
  opts.max_support_product = 100;
  CHECK_THROWS_AS((void)ot::exact_w1(mu, nu, opts), ResourceError);
}

TEST_CASE("grid self-distance is zero and refinement error is bounded") {
  const auto g1 = ot::grid_uniform(2, 3);
  CHECK(ot::exact_w1(g1, g1).cost == doctest::Approx(0.0).epsilon(1e-12));

  for (int d = 1; d <= 3; ++d) {
    for (int m : {2, 4}) {
      const auto coarse = ot::grid_uniform(d, m);
      const auto fine = ot::grid_uniform(d, 2 * m);
      const double w1 = ot::exact_w1(coarse, fine).cost;
      CHECK(w1 <= std::sqrt(double(d)) / (2.0 * m) + 1e-12);
    }
  }
}

TEST_CASE("degenerate equal-weight grids solve cleanly (degeneracy stress)") {
  // many equal weights and symmetric distances drive degenerate pivots
  const auto a = ot::grid_uniform(2, 8);
  const auto b = ot::grid_uniform(2, 7);
  const auto res = ot::exact_w1(a, b);
  CHECK(res.cost >= 0.0);
  CHECK(res.cost <= std::sqrt(2.0) / 14.0 + 1e-12);
  check_marginals(res, a, b);
}

TEST_CASE("moderate instances agree with the LP oracle too") {
  Rng rng(99);
  const auto mu = random_measure(3, 11, rng, true);
  const auto nu = random_measure(3, 9, rng, false);
  const auto res = ot::exact_w1(mu, nu);
  CHECK(std::abs(res.cost - testing::lp_w1(mu, nu)) < 1e-9);
}

TEST_CASE("rate study: determinism and metric bounds at n = 1") {
  const auto r1 = ot::empirical_rate_study(2, {1, 2}, 3, 8, 5);
  const auto r2 = ot::empirical_rate_study(2, {1, 2}, 3, 8, 5);
  REQUIRE(r1.rows.size() == 2);
  CHECK(r1.rows[0].mean_w1 == r2.rows[0].mean_w1);
  CHECK(r1.low_dim_flagged);

  // W1(delta_U, U_2) is between 0 and the diameter sqrt(2)
  CHECK(r1.rows[0].mean_w1 >= 0.0);
  CHECK(r1.rows[0].mean_w1 <= std::sqrt(2.0));
}

TEST_CASE("rate study rejects too-coarse grids") {
  CHECK_THROWS_AS(
      (void)ot::empirical_rate_study(2, {16, 256}, 2, 8, 1),
      ConfigError);  // m = 8 < sqrt(256) = 16
}

TEST_CASE("c_hat fit is positive") {
  const auto r = ot::empirical_rate_study(2, {8, 16}, 2, 16, 3);
  CHECK(ot::fit_c_hat(r) > 0.0);
}
