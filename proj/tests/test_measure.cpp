#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "liperm/measure.hpp"
#include "liperm/nets.hpp"

using namespace liperm;
using ot::DiscreteMeasure;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("weights must sum to one within 1e-12") {
  MatrixXd pts(1, 2);
  pts << 0.1, 0.9;
  VectorXd bad(2);
  bad << 0.5, 0.6;
  CHECK_THROWS_AS(DiscreteMeasure(pts, bad), ConfigError);
  VectorXd ok(2);
  ok << 0.25, 0.75;
  CHECK_NOTHROW(DiscreteMeasure(pts, ok));
}

TEST_CASE("coordinates outside the unit box are rejected, clamp is explicit") {
  MatrixXd pts(1, 1);
  pts << 1.5;
  CHECK_THROWS_AS(DiscreteMeasure::uniform_atoms(pts), ConfigError);

  MatrixXd in(1, 2);
  in << 0.0, 1.0;
  const auto mu = DiscreteMeasure::uniform_atoms(in);
  const auto clamped = ot::clamp_to_unit_box(mu);
  CHECK(clamped.points() == mu.points());
}

TEST_CASE("deduplication merges coincident atoms and sums weights") {
  MatrixXd pts(2, 3);
  pts << 0.5, 0.5, 0.2, 0.5, 0.5, 0.7;
  VectorXd w(3);
  w << 0.25, 0.5, 0.25;
  const auto mu = DiscreteMeasure(pts, w).deduplicated();
  CHECK(mu.size() == 2);
  double merged = 0.0;
  for (int i = 0; i < mu.size(); ++i) {
    if (mu.points()(0, i) == 0.5) merged = mu.weights()[i];
  }
  CHECK(merged == doctest::Approx(0.75));
}

TEST_CASE("CSV round trip preserves atoms at 17 significant digits") {
  MatrixXd pts(2, 2);
  pts << 0.12345678901234567, 1.0 / 3.0, 0.9999999999999999, 1e-17;
  VectorXd w(2);
  w << 0.3, 0.7;
  const DiscreteMeasure mu(pts, w);

  std::stringstream ss;
  mu.write_csv(ss);
  const auto back = DiscreteMeasure::read_csv(ss);
  CHECK(back.points() == mu.points());
  CHECK(back.weights() == mu.weights());
}

TEST_CASE("grid_uniform d=1 m=2 gives atoms 0.25, 0.75 with weight 0.5") {
  const auto g = ot::grid_uniform(1, 2);
  REQUIRE(g.size() == 2);
  CHECK(g.points()(0, 0) == 0.25);
  CHECK(g.points()(0, 1) == 0.75);
  CHECK(g.weights()[0] == 0.5);
  CHECK(g.weights()[1] == 0.5);
}

TEST_CASE("grid_uniform d=2 m=1 is a single centered atom") {
  const auto g = ot::grid_uniform(2, 1);
  REQUIRE(g.size() == 1);
  CHECK(g.points()(0, 0) == 0.5);
  CHECK(g.points()(1, 0) == 0.5);
  CHECK(g.weights()[0] == 1.0);
}

TEST_CASE("grid_uniform enforces the atom cap") {
  CHECK_THROWS_AS(ot::grid_uniform(3, 200, 1000), ResourceError);
}

TEST_CASE("sample_uniform basics") {
  const auto one = ot::sample_uniform(2, 1, 7);
  CHECK(one.size() == 1);
  CHECK(one.weights()[0] == 1.0);

  const auto a = ot::sample_uniform(3, 50, 42);
  const auto b = ot::sample_uniform(3, 50, 42);
  CHECK(a.points() == b.points());

  const auto big = ot::sample_uniform(2, 4096, 9);
  CHECK((big.points().array() >= 0.0).all());
  CHECK((big.points().array() <= 1.0).all());
}

TEST_CASE("pushforward: identity map leaves the measure unchanged") {
  nets::MlpNetwork id({2, 2}, nets::Activation::kTanh, false,
                      nets::LipschitzMode::unconstrained());
  id.params().weight(0).setIdentity();
  id.params().bias(0).setZero();

  const auto latent = ot::sample_uniform(2, 16, 3);
  const auto out = nets::pushforward(id, latent);
  CHECK(out.size() == latent.size());
  // dedup sorts atoms, so compare total mass and membership
  CHECK(out.weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("pushforward: constant map aggregates to a single dirac") {
  nets::MlpNetwork c({2, 2}, nets::Activation::kTanh, false,
                     nets::LipschitzMode::unconstrained());
  c.params().weight(0).setZero();
  c.params().bias(0) << 0.3, 0.6;

  const auto latent = ot::sample_uniform(2, 32, 4);
  const auto out = nets::pushforward(c, latent);
  REQUIRE(out.size() == 1);
  CHECK(out.points()(0, 0) == 0.3);
  CHECK(out.points()(1, 0) == 0.6);
  CHECK(out.weights()[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("pushforward: hand-set affine map on 3 atoms") {
  // g(u) = 0.5 u + (0.1, 0.2); images computed by hand
  nets::MlpNetwork g({2, 2}, nets::Activation::kTanh, false,
                     nets::LipschitzMode::unconstrained());
  g.params().weight(0) << 0.5, 0.0, 0.0, 0.5;
  g.params().bias(0) << 0.1, 0.2;

  MatrixXd pts(2, 3);
  pts << 0.0, 0.4, 1.0, 0.0, 0.8, 1.0;
  const auto latent = DiscreteMeasure::uniform_atoms(pts);
  const auto out = nets::pushforward(g, latent);
  REQUIRE(out.size() == 3);
  // expected images: (0.1,0.2), (0.3,0.6), (0.6,0.7)
  bool found = false;
  for (int i = 0; i < out.size(); ++i) {
    if (out.points()(0, i) == doctest::Approx(0.3) &&
        out.points()(1, i) == doctest::Approx(0.6)) {
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("pushforward preserves total mass exactly") {
  auto g = nets::make_generator(2, 3, {8, 8}, nets::LipschitzMode::unconstrained(), 5);
  const auto latent = ot::sample_uniform(2, 100, 6);
  const auto out = nets::pushforward(g, latent);
  CHECK(out.weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("subsample is deterministic and reweights equally") {
  const auto mu = ot::sample_uniform(2, 100, 11);
  Rng r1(13), r2(13);
  const auto a = mu.subsample(32, r1);
  const auto b = mu.subsample(32, r2);
  CHECK(a.points() == b.points());
  CHECK(a.size() == 32);
  CHECK(a.weights()[0] == doctest::Approx(1.0 / 32));
}
