#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "liperm/ot.hpp"
#include "liperm/train.hpp"

using namespace liperm;
using ot::DiscreteMeasure;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

DiscreteMeasure dirac1(double x) {
  VectorXd v(1);
  v << x;
  return DiscreteMeasure::dirac(v);
}

nets::MlpNetwork identity_net(int d) {
  nets::MlpNetwork net({d, d}, nets::Activation::kTanh, false,
                       nets::LipschitzMode::unconstrained());
  net.params().weight(0).setIdentity();
  net.params().bias(0).setZero();
  return net;
}

}  // namespace

TEST_CASE("penalty vanishes when h o g is the identity") {
  const auto g = identity_net(2);
  const auto h = identity_net(2);
  const auto latents = ot::sample_uniform(2, 64, 1);
  CHECK(train::left_inverse_penalty(g, h, 2.0, latents) == 0.0);
}

TEST_CASE("constant generators have positive penalty") {
  nets::MlpNetwork g({1, 1}, nets::Activation::kTanh, false,
                     nets::LipschitzMode::unconstrained());
  g.params().weight(0).setZero();
  g.params().bias(0) << 0.4;
  const auto h = identity_net(1);
  MatrixXd pts(1, 2);
  pts << 0.1, 0.9;
  const auto latents = DiscreteMeasure::uniform_atoms(pts);
  CHECK(train::left_inverse_penalty(g, h, 2.0, latents) > 0.0);
}

TEST_CASE("penalty hand case: g(u)=u/2, h=Id, atoms {0,1}, q=2 gives 0.125") {
  nets::MlpNetwork g({1, 1}, nets::Activation::kTanh, false,
                     nets::LipschitzMode::unconstrained());
  g.params().weight(0) << 0.5;
  g.params().bias(0).setZero();
  const auto h = identity_net(1);
  MatrixXd pts(1, 2);
  pts << 0.0, 1.0;
  const auto latents = DiscreteMeasure::uniform_atoms(pts);
  CHECK(train::left_inverse_penalty(g, h, 2.0, latents) ==
        doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("penalty is nonnegative on random nets") {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    auto g = nets::make_generator(2, 2, {8}, nets::LipschitzMode::unconstrained(),
                                  rng.next_u64());
    auto h = nets::make_encoder(2, 2, {8}, 4.0, rng.next_u64());
    const auto latents = ot::sample_uniform(2, 32, rng.next_u64());
    CHECK(train::left_inverse_penalty(g, h, 2.0, latents) >= 0.0);
  }
}

TEST_CASE("critic loss: zero critic gives gp_weight") {
  auto f = nets::make_critic(1, {8}, 1);
  f.params().values.setZero();
  const auto data = dirac1(1.0);
  const auto gen = dirac1(0.0);
  // gradient norm is 0 everywhere, so the penalty term is (0-1)^2 = 1
  CHECK(train::ipm_critic_loss(f, gen, data, 10.0, 5) ==
        doctest::Approx(10.0).epsilon(1e-12));
  CHECK(train::ipm_critic_loss(f, gen, data, 2.5, 5) ==
        doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("critic loss: identical measures zero the mean-gap term") {
  auto f = nets::make_critic(2, {8, 8}, 2);
  const auto data = ot::sample_uniform(2, 16, 7);
  // loss = gp-part only; compare against gp_weight = 0 run to isolate it
  const double with_gp = train::ipm_critic_loss(f, data, data, 10.0, 5);
  const double no_gp = train::ipm_critic_loss(f, data, data, 0.0, 5);
  CHECK(no_gp == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(with_gp >= 0.0);
}

TEST_CASE("trained critic estimates W1(delta_0, delta_1) within [0.8, 1.0]") {
  // Finite-budget WGAN-GP critic on two point masses approaches the true
  // W1 = 1 from below. Note the budget matters: at full convergence the
  // two-sided penalty settles at slope 1 + 1/(2 gp_weight) and the
  // estimate overshoots W1 by a few percent.
  const auto data = dirac1(1.0);
  const auto gen = dirac1(0.0);
  auto f = nets::make_critic(1, {32, 32}, 11);

  train::AdamState adam;
  adam.init(f.params().size());
  Rng rng(17);
  MatrixXd xd(1, 1), xg(1, 1);
  xd << 1.0;
  xg << 0.0;
  const VectorXd w1v = VectorXd::Ones(1);

  double ipm_est = 0.0;
  for (int it = 0; it < 200; ++it) {
    ad::Tape tape;
    const int fb = tape.register_block(f.params());
    const int f_data = f.forward_taped(tape, fb, tape.leaf(xd));
    const int f_gen = f.forward_taped(tape, fb, tape.leaf(xg));
    // interpolates between the two atoms
    MatrixXd interp(1, 16);
    for (int i = 0; i < 16; ++i) interp(0, i) = rng.uniform01();
    const auto [out, grad] =
        f.value_and_input_gradient(tape, fb, tape.leaf(interp));
    (void)out;
    const int gp = tape.mean_all(
        tape.square(tape.add_const(tape.colwise_norm(grad), -1.0)));
    const int gap = tape.sub(tape.sum_all(f_data), tape.sum_all(f_gen));
    const int loss =
        tape.add(tape.scale(tape.abs(gap), -1.0), tape.scale(gp, 50.0));
    auto grads = tape.backward(loss);
    adam.step(f.params(), grads[0], 1e-3, 0.5, 0.9, 1e-8);
    ipm_est = std::abs(tape.scalar(gap));
  }
  (void)w1v;
  const double true_w1 = ot::exact_w1(data, gen).cost;
  CHECK(true_w1 == doctest::Approx(1.0));
  CHECK(ipm_est >= 0.8 * true_w1);
  CHECK(ipm_est <= 1.0 * true_w1);
}

namespace {

train::LipermObjectiveConfig small_cfg() {
  train::LipermObjectiveConfig cfg;
  cfg.mc_samples = 32;
  cfg.critic_steps = 2;
  cfg.encoder_steps = 2;
  cfg.generator_steps = 1;
  cfg.iterations = 5;
  cfg.seed = 99;
  return cfg;
}

train::ArchSpec small_arch(int d) {
  train::ArchSpec arch;
  arch.latent_dim = d;
  arch.gen_widths = {8, 8};
  arch.enc_widths = {8, 8};
  arch.critic_widths = {8, 8};
  arch.L_H = 4.0;
  return arch;
}

}  // namespace

TEST_CASE("lambda = 0 removes the penalty from the generator gradient") {
  const auto data = ot::sample_uniform(2, 16, 21);
  auto cfg = small_cfg();
  const auto arch = small_arch(2);

  // Build the generator-step loss both ways on identical nets and compare
  // gradients bit-exactly: lambda = 0 must equal the ipm-only objective.
  auto g = nets::make_generator(2, 2, arch.gen_widths,
                                nets::LipschitzMode::unconstrained(), 1);
  auto h = nets::make_encoder(2, 2, arch.enc_widths, arch.L_H, 2);
  auto f = nets::make_critic(2, arch.critic_widths, 3);

  const auto latents = ot::sample_uniform(2, 32, 5);
  const VectorXd w = VectorXd::Constant(32, 1.0 / 32);

  ad::Tape t1;
  int gb = t1.register_block(g.params());
  int hb = t1.register_block(h.params());
  int fb = t1.register_block(f.params());
  int gu = g.forward_taped(t1, gb, t1.leaf(latents.points()));
  int fgen = f.forward_taped(t1, fb, gu);
  MatrixXd wrow(1, 32);
  wrow.row(0) = w.transpose();
  int ipm_only = t1.scale(t1.sum_all(t1.hadamard(fgen, t1.leaf(wrow))), -1.0);
  // penalty recorded but not attached (lambda = 0 path)
  (void)train::penalty_node(t1, g, gb, h, hb, latents.points(), w, 2.0);
  const auto grads1 = t1.backward(ipm_only);

  ad::Tape t2;
  gb = t2.register_block(g.params());
  hb = t2.register_block(h.params());
  fb = t2.register_block(f.params());
  gu = g.forward_taped(t2, gb, t2.leaf(latents.points()));
  fgen = f.forward_taped(t2, fb, gu);
  int ipm2 = t2.scale(t2.sum_all(t2.hadamard(fgen, t2.leaf(wrow))), -1.0);
  const auto grads2 = t2.backward(ipm2);

  CHECK(grads1[0].values == grads2[0].values);
  CHECK(grads1[1].values.isZero(0.0));  // no penalty contribution to h
  (void)cfg;
  (void)data;
}

TEST_CASE("zero learning rates leave parameters bit-exactly unchanged") {
  const auto data = ot::sample_uniform(2, 16, 22);
  auto cfg = small_cfg();
  cfg.lr_critic = cfg.lr_encoder = cfg.lr_generator = 0.0;
  cfg.iterations = 1;
  const auto arch = small_arch(2);

  auto g = nets::make_generator(2, 2, arch.gen_widths,
                                nets::LipschitzMode::unconstrained(),
                                derive_seed(cfg.seed, 101));
  auto h = nets::make_encoder(2, 2, arch.enc_widths, arch.L_H,
                              derive_seed(cfg.seed, 102));
  auto f = nets::make_critic(2, arch.critic_widths, derive_seed(cfg.seed, 103));
  const VectorXd g0 = g.params().values;
  const VectorXd h0 = h.params().values;
  const VectorXd f0 = f.params().values;

  train::LipermTrainer trainer(g, h, f, cfg);
  (void)trainer.step(data);
  CHECK(trainer.generator().params().values == g0);
  CHECK(trainer.encoder().params().values == h0);
  CHECK(trainer.critic().params().values == f0);
}

TEST_CASE("zero iterations return the initialized networks unchanged") {
  const auto data = ot::sample_uniform(2, 8, 23);
  auto cfg = small_cfg();
  cfg.iterations = 0;
  const auto arch = small_arch(2);
  const auto result = train::train(data, cfg, arch);
  CHECK(result.trace.records.empty());

  auto g_ref = nets::make_generator(2, 2, arch.gen_widths, arch.gen_mode,
                                    derive_seed(cfg.seed, 101), arch.hidden);
  CHECK(result.g.params().values == g_ref.params().values);
}

TEST_CASE("same seed gives identical traces") {
  const auto data = ot::sample_uniform(2, 16, 24);
  const auto cfg = small_cfg();
  const auto arch = small_arch(2);
  const auto r1 = train::train(data, cfg, arch);
  const auto r2 = train::train(data, cfg, arch);
  REQUIRE(r1.trace.records.size() == r2.trace.records.size());
  CHECK(r1.trace.to_csv() == r2.trace.to_csv());
  CHECK(r1.g.params().values == r2.g.params().values);
}

TEST_CASE("toy 1D run reduces the exact W1 to the data") {
  // 8 spread-out data points on [0,1]; 400 iterations of the full loop.
  MatrixXd pts(1, 8);
  pts << 0.05, 0.18, 0.31, 0.44, 0.57, 0.7, 0.83, 0.96;
  const auto data = DiscreteMeasure::uniform_atoms(pts);

  train::LipermObjectiveConfig cfg;
  cfg.lambda = 1.0;
  cfg.mc_samples = 64;
  cfg.critic_steps = 3;
  cfg.encoder_steps = 2;
  cfg.generator_steps = 1;
  cfg.iterations = 400;
  cfg.seed = 31;
  cfg.lr_critic = 2e-3;
  cfg.lr_encoder = 2e-3;
  cfg.lr_generator = 2e-3;

  train::ArchSpec arch;
  arch.latent_dim = 1;
  arch.gen_widths = {16, 16};
  arch.enc_widths = {16, 16};
  arch.critic_widths = {16, 16};
  arch.L_H = 8.0;

  auto g0 = nets::make_generator(1, 1, arch.gen_widths, arch.gen_mode,
                                 derive_seed(cfg.seed, 101), arch.hidden);
  const auto eval_gap = [&](const nets::MlpNetwork& g) {
    const auto push = nets::pushforward(g, ot::sample_uniform(1, 256, 777));
    return ot::exact_w1(push, data).cost;
  };
  const double before = eval_gap(g0);
  const auto result = train::train(data, cfg, arch);
  REQUIRE_FALSE(result.trace.diverged);
  const double after = eval_gap(result.g);
  CHECK(after < before);
}

TEST_CASE("divergence guard aborts and records") {
  const auto data = ot::sample_uniform(2, 8, 25);
  auto cfg = small_cfg();
  cfg.lr_critic = 1e9;  // blow up on purpose
  cfg.divergence_threshold = 10.0;
  cfg.iterations = 50;
  const auto arch = small_arch(2);
  const auto result = train::train(data, cfg, arch);
  CHECK(result.trace.diverged);
  CHECK(result.trace.diverged_iteration >= 0);
  CHECK_FALSE(result.trace.message.empty());
}

TEST_CASE("trace CSV schema") {
  const auto data = ot::sample_uniform(2, 8, 26);
  auto cfg = small_cfg();
  cfg.iterations = 2;
  const auto result = train::train(data, cfg, small_arch(2));
  const auto csv = result.trace.to_csv();
  CHECK(csv.rfind("iter,ipm_est,penalty_est,objective,critic_gp,lip_cert_h\n",
                  0) == 0);
  CHECK(result.trace.records.size() == 2);
}

TEST_CASE("encoder stays within its certified budget during training") {
  const auto data = ot::sample_uniform(2, 16, 27);
  auto cfg = small_cfg();
  cfg.iterations = 8;
  const auto arch = small_arch(2);
  const auto result = train::train(data, cfg, arch);
  for (const auto& rec : result.trace.records) {
    CHECK(rec.lip_cert_h <= arch.L_H * (1.0 + 1e-9));
  }
}

TEST_CASE("evaluate_generator: memorizing generator has near-zero gap") {
  // data = single atom; generator constant at that atom
  VectorXd a(2);
  a << 0.3, 0.7;
  const auto data = DiscreteMeasure::dirac(a);
  nets::MlpNetwork g({2, 2}, nets::Activation::kTanh, false,
                     nets::LipschitzMode::unconstrained());
  g.params().weight(0).setZero();
  g.params().bias(0) = a;

  train::EvalOptions opts;
  opts.m_eval = 64;
  opts.probe_steps = 10;
  opts.probe_widths = {8};
  opts.grid_m = 8;
  opts.seed = 5;
  const auto res = train::evaluate_generator(g, data, nullptr, opts);
  CHECK(res.diversity_gap == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.penalty_value > 0.0);  // constant maps are not left-invertible
  CHECK_FALSE(res.accuracy.has_value());
}

TEST_CASE("evaluate_generator: accuracy against a supplied sampler") {
  VectorXd a(2);
  a << 0.5, 0.5;
  const auto data = DiscreteMeasure::dirac(a);
  nets::MlpNetwork g({2, 2}, nets::Activation::kTanh, false,
                     nets::LipschitzMode::unconstrained());
  g.params().weight(0).setZero();
  g.params().bias(0) = a;

  train::PStarSampler sampler = [](int n, std::uint64_t seed) {
    return ot::sample_uniform(2, n, seed);
  };
  train::EvalOptions opts;
  opts.m_eval = 128;
  opts.probe_steps = 5;
  opts.probe_widths = {8};
  opts.grid_m = 8;
  const auto res = train::evaluate_generator(g, data, &sampler, opts);
  REQUIRE(res.accuracy.has_value());
  // W1(delta_center, U_2) = E||U - c|| ~ 0.3826
  CHECK(*res.accuracy == doctest::Approx(0.3826).epsilon(0.05));
}
