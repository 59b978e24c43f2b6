#include "liperm/train.hpp"

#include <cmath>
#include <sstream>

#include "liperm/io_util.hpp"
#include "liperm/ot.hpp"

namespace liperm::train {

void LipermObjectiveConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
  if (q < 1.0) throw ConfigError("config: q must be >= 1");
  if (mc_samples < 1) throw ConfigError("config: mc_samples must be >= 1");
  if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
  if (critic_steps < 0 || encoder_steps < 0 || generator_steps < 0) {
    throw ConfigError("config: step counts must be >= 0");
  }
}

std::string TrainingTrace::to_csv() const {
  std::ostringstream os;
  os << "iter,ipm_est,penalty_est,objective,critic_gp,lip_cert_h\n";
  for (const auto& r : records) {
    os << r.iter << "," << format_g17(r.ipm_est) << ","
       << format_g17(r.penalty_est) << "," << format_g17(r.objective) << ","
       << format_g17(r.critic_gp) << "," << format_g17(r.lip_cert_h) << "\n";
  }
  return os.str();
}

void TrainingTrace::save_csv(const std::string& path) const {
  atomic_write_file(path, to_csv());
}

void AdamState::init(long size) {
  m = VectorXd::Zero(size);
  v = VectorXd::Zero(size);
  t = 0;
}

void AdamState::step(ad::ParamVector& params, const ad::ParamVector& grad,
                     double lr, double beta1, double beta2, double eps) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad.values;
  v = beta2 * v +
      (1.0 - beta2) * grad.values.cwiseProduct(grad.values);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.values.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

namespace {

// weights-weighted mean of a 1 x B row node
int weighted_mean_node(ad::Tape& tape, int row, const VectorXd& weights) {
  MatrixXd w(1, weights.size());
  w.row(0) = weights.transpose();
  return tape.sum_all(tape.hadamard(row, tape.leaf(std::move(w))));
}

int norm_power_node(ad::Tape& tape, int diff, double q) {
  if (q == 2.0) return tape.colwise_squared_norm(diff);
  if (q == 1.0) return tape.colwise_norm(diff);
  return tape.pow_const(tape.colwise_squared_norm(diff), q / 2.0);
}

}  // namespace

int penalty_node(ad::Tape& tape, const nets::MlpNetwork& g, int g_block,
                 const nets::MlpNetwork& h, int h_block, const MatrixXd& u,
                 const VectorXd& weights, double q) {
  const int u_node = tape.leaf(u);
  const int gu = g.forward_taped(tape, g_block, u_node);
  const int hgu = h.forward_taped(tape, h_block, gu);
  const int diff = tape.sub(hgu, u_node);
  return weighted_mean_node(tape, norm_power_node(tape, diff, q), weights);
}

double left_inverse_penalty(const nets::MlpNetwork& g,
                            const nets::MlpNetwork& h, double q,
                            const DiscreteMeasure& latent_samples) {
  if (q < 1.0) throw ConfigError("left_inverse_penalty: q must be >= 1");
  ad::Tape tape;
  const int gb = tape.register_block(g.params());
  const int hb = tape.register_block(h.params());
  const int pen = penalty_node(tape, g, gb, h, hb, latent_samples.points(),
                               latent_samples.weights(), q);
  return tape.scalar(pen);
}

namespace {

struct CriticLossParts {
  int loss = -1;
  double ipm_est = 0.0;     // |E_data f - E_gen f|
  double signed_gap = 0.0;  // E_data f - E_gen f
  double gp = 0.0;
};

CriticLossParts critic_loss_node(ad::Tape& tape, const nets::MlpNetwork& f,
                                 int f_block, const MatrixXd& data_pts,
                                 const VectorXd& data_w,
                                 const MatrixXd& gen_pts,
                                 const VectorXd& gen_w, double gp_weight,
                                 Rng& rng) {
  const int f_data = f.forward_taped(tape, f_block, tape.leaf(data_pts));
  const int f_gen = f.forward_taped(tape, f_block, tape.leaf(gen_pts));
  const int mean_data = weighted_mean_node(tape, f_data, data_w);
  const int mean_gen = weighted_mean_node(tape, f_gen, gen_w);

  // One interpolate per generated sample; the data endpoint is drawn
  // proportionally to its weight.
  const int k = static_cast<int>(gen_pts.cols());
  const int n_data = static_cast<int>(data_pts.cols());
  VectorXd cdf(n_data);
  double acc = 0.0;
  for (int i = 0; i < n_data; ++i) {
    acc += data_w[i];
    cdf[i] = acc;
  }
  MatrixXd interp(data_pts.rows(), k);
  for (int i = 0; i < k; ++i) {
    const double u = rng.uniform01() * acc;
    const double* it = std::lower_bound(cdf.data(), cdf.data() + n_data, u);
    int j = static_cast<int>(it - cdf.data());
    if (j >= n_data) j = n_data - 1;
    const double t = rng.uniform01();
    interp.col(i) = t * data_pts.col(j) + (1.0 - t) * gen_pts.col(i);
  }
  const auto [out, grad] =
      f.value_and_input_gradient(tape, f_block, tape.leaf(std::move(interp)));
  (void)out;
  const int gnorm = tape.colwise_norm(grad);
  const int gp = tape.mean_all(tape.square(tape.add_const(gnorm, -1.0)));

  // The mean-gap term enters through |.|: the test class is symmetric
  // (f and -f witness the same IPM), and the absolute value keeps the
  // critic from locking into the inverted gradient-penalty well on
  // near-symmetric supports.
  const int gap = tape.sub(mean_data, mean_gen);
  CriticLossParts parts;
  parts.loss = tape.add(tape.scale(tape.abs(gap), -1.0),
                        tape.scale(gp, gp_weight));
  parts.signed_gap = tape.scalar(gap);
  parts.ipm_est = std::abs(parts.signed_gap);
  parts.gp = tape.scalar(gp);
  return parts;
}

}  // namespace

double ipm_critic_loss(const nets::MlpNetwork& f,
                       const DiscreteMeasure& gen_samples,
                       const DiscreteMeasure& data, double gp_weight,
                       std::uint64_t seed) {
  ad::Tape tape;
  const int fb = tape.register_block(f.params());
  Rng rng(seed);
  const auto parts =
      critic_loss_node(tape, f, fb, data.points(), data.weights(),
                       gen_samples.points(), gen_samples.weights(), gp_weight,
                       rng);
  return tape.scalar(parts.loss);
}

LipermTrainer::LipermTrainer(nets::MlpNetwork g, nets::MlpNetwork h,
                             nets::MlpNetwork f, LipermObjectiveConfig cfg)
    : g_(std::move(g)),
      h_(std::move(h)),
      f_(std::move(f)),
      cfg_(std::move(cfg)),
      rng_(derive_seed(cfg_.seed, 104)) {
  cfg_.validate();
  if (h_.mode().kind != nets::LipschitzKind::kCertified) {
    throw ConfigError("trainer: encoder must be in certified mode");
  }
  if (f_.out_dim() != 1) throw ConfigError("trainer: critic must be scalar");
  if (g_.out_dim() != h_.in_dim() || h_.out_dim() != g_.in_dim() ||
      f_.in_dim() != g_.out_dim()) {
    throw ConfigError("trainer: network dimensions are inconsistent");
  }
  adam_g_.init(g_.params().size());
  adam_h_.init(h_.params().size());
  adam_f_.init(f_.params().size());
}

MatrixXd LipermTrainer::draw_latents(int count) {
  MatrixXd u(g_.in_dim(), count);
  for (int j = 0; j < count; ++j) {
    for (int i = 0; i < g_.in_dim(); ++i) u(i, j) = rng_.uniform01();
  }
  return u;
}

void LipermTrainer::check_finite(double loss, const char* what) {
  if (!std::isfinite(loss) || std::abs(loss) > cfg_.divergence_threshold) {
    throw DivergenceError(std::string(what) + " loss " + std::to_string(loss) +
                              " at iteration " + std::to_string(iter_),
                          iter_);
  }
}

double LipermTrainer::critic_update(const MatrixXd& data_pts,
                                    const VectorXd& data_w,
                                    IterationRecord& rec) {
  const MatrixXd u = draw_latents(cfg_.mc_samples);
  const MatrixXd gen = g_.eval(u);
  const VectorXd gen_w =
      VectorXd::Constant(gen.cols(), 1.0 / double(gen.cols()));

  ad::Tape tape;
  const int fb = tape.register_block(f_.params());
  const auto parts = critic_loss_node(tape, f_, fb, data_pts, data_w, gen,
                                      gen_w, cfg_.gp_weight, rng_);
  const double loss = tape.scalar(parts.loss);
  check_finite(loss, "critic");
  auto grads = tape.backward(parts.loss);
  adam_f_.step(f_.params(), grads[0], cfg_.lr_critic, cfg_.adam_beta1,
               cfg_.adam_beta2, cfg_.adam_eps);
  rec.ipm_est = parts.ipm_est;
  rec.critic_gp = parts.gp;
  witness_sign_ = parts.signed_gap < 0.0 ? -1.0 : 1.0;
  return loss;
}

double LipermTrainer::encoder_update() {
  const MatrixXd u = draw_latents(cfg_.mc_samples);
  const VectorXd w = VectorXd::Constant(u.cols(), 1.0 / double(u.cols()));

  ad::Tape tape;
  const int gb = tape.register_block(g_.params());
  const int hb = tape.register_block(h_.params());
  const int pen = penalty_node(tape, g_, gb, h_, hb, u, w, cfg_.q);
  const double loss = tape.scalar(pen);
  check_finite(loss, "encoder");
  auto grads = tape.backward(pen);
  adam_h_.step(h_.params(), grads[1], cfg_.lr_encoder, cfg_.adam_beta1,
               cfg_.adam_beta2, cfg_.adam_eps);
  nets::project_to_lipschitz_in_place(h_, h_.mode().bound);
  return loss;
}

double LipermTrainer::generator_update(IterationRecord& rec) {
  const MatrixXd u_ipm = draw_latents(cfg_.mc_samples);
  const MatrixXd u_pen = draw_latents(cfg_.mc_samples);
  const VectorXd w =
      VectorXd::Constant(cfg_.mc_samples, 1.0 / double(cfg_.mc_samples));

  ad::Tape tape;
  const int gb = tape.register_block(g_.params());
  const int hb = tape.register_block(h_.params());
  const int fb = tape.register_block(f_.params());

  // Descend the witnessed IPM: d/dg |E_data f - E_gen f| =
  // -sign(gap) d/dg E_gen f, with the sign frozen from the latest critic
  // pass (the data term does not depend on g).
  const int gu = g_.forward_taped(tape, gb, tape.leaf(u_ipm));
  const int f_gen = f_.forward_taped(tape, fb, gu);
  const int ipm_term =
      tape.scale(weighted_mean_node(tape, f_gen, w), -witness_sign_);

  // Penalty subgraph is always recorded (the trace reports it); it joins
  // the objective only for lambda > 0, so at lambda = 0 the generator
  // gradient has exactly zero contribution from it.
  const int pen = penalty_node(tape, g_, gb, h_, hb, u_pen, w, cfg_.q);
  const int loss_node =
      cfg_.lambda > 0.0 ? tape.add(ipm_term, tape.scale(pen, cfg_.lambda))
                        : ipm_term;

  const double loss = tape.scalar(loss_node);
  check_finite(loss, "generator");
  rec.penalty_est = tape.scalar(pen);
  auto grads = tape.backward(loss_node);
  adam_g_.step(g_.params(), grads[0], cfg_.lr_generator, cfg_.adam_beta1,
               cfg_.adam_beta2, cfg_.adam_eps);
  return loss;
}

IterationRecord LipermTrainer::step(const DiscreteMeasure& data) {
  MatrixXd data_pts;
  VectorXd data_w;
  if (cfg_.batch_size > 0 && cfg_.batch_size < data.size()) {
    Rng batch_rng(derive_seed(cfg_.seed, 7000 + static_cast<std::uint64_t>(iter_)));
    const auto batch = data.subsample(cfg_.batch_size, batch_rng);
    data_pts = batch.points();
    data_w = batch.weights();
  } else {
    data_pts = data.points();
    data_w = data.weights();
  }

  IterationRecord rec;
  rec.iter = iter_;
  for (int s = 0; s < cfg_.critic_steps; ++s) {
    critic_update(data_pts, data_w, rec);
  }
  for (int s = 0; s < cfg_.encoder_steps; ++s) {
    encoder_update();
  }
  for (int s = 0; s < cfg_.generator_steps; ++s) {
    generator_update(rec);
  }
  rec.lip_cert_h = nets::certify_lipschitz(h_).product_bound;
  if (cfg_.generator_steps == 0) {
    // keep the trace meaningful when only the critic/encoder move
    MatrixXd u = draw_latents(cfg_.mc_samples);
    const VectorXd w = VectorXd::Constant(u.cols(), 1.0 / double(u.cols()));
    rec.penalty_est = left_inverse_penalty(
        g_, h_, cfg_.q, DiscreteMeasure(std::move(u), w));
  }
  rec.objective = rec.ipm_est + cfg_.lambda * rec.penalty_est;
  ++iter_;
  return rec;
}

TrainResult LipermTrainer::run(const DiscreteMeasure& data) {
  trace_.records.reserve(static_cast<size_t>(cfg_.iterations));
  for (int it = 0; it < cfg_.iterations; ++it) {
    try {
      trace_.records.push_back(step(data));
    } catch (const DivergenceError& e) {
      trace_.diverged = true;
      trace_.diverged_iteration = e.iteration;
      trace_.message = e.what();
      break;
    }
  }
  return {g_, h_, f_, trace_};
}

TrainResult train(const DiscreteMeasure& data,
                  const LipermObjectiveConfig& cfg, const ArchSpec& arch) {
  cfg.validate();
  const int D = data.dim();
  const int d = arch.latent_dim;
  auto g = nets::make_generator(d, D, arch.gen_widths, arch.gen_mode,
                                derive_seed(cfg.seed, 101), arch.hidden);
  auto h = nets::make_encoder(D, d, arch.enc_widths, arch.L_H,
                              derive_seed(cfg.seed, 102), arch.hidden);
  auto f = nets::make_critic(D, arch.critic_widths, derive_seed(cfg.seed, 103),
                             arch.hidden);
  LipermTrainer trainer(std::move(g), std::move(h), std::move(f), cfg);
  return trainer.run(data);
}

EvalResult evaluate_generator(const nets::MlpNetwork& g,
                              const DiscreteMeasure& data,
                              const PStarSampler* p_star_sampler,
                              const EvalOptions& opts) {
  EvalResult out;
  const int d = g.in_dim();

  const auto latents =
      ot::sample_uniform(d, opts.m_eval, derive_seed(opts.seed, 11));
  const auto push = nets::pushforward(g, latents);
  out.diversity_gap = ot::exact_w1(push, data, opts.w1).cost;

  if (p_star_sampler != nullptr) {
    const auto fresh = (*p_star_sampler)(opts.m_eval, derive_seed(opts.seed, 12));
    out.accuracy = ot::exact_w1(push, fresh, opts.w1).cost;
  }

  // Fresh probe encoder, optimized from scratch against the frozen
  // generator; guards against a stale inner minimizer.
  auto probe = nets::make_encoder(data.dim(), d, opts.probe_widths, opts.L_H,
                                  derive_seed(opts.seed, 13), opts.hidden);
  AdamState adam;
  adam.init(probe.params().size());
  Rng rng(derive_seed(opts.seed, 14));
  for (int it = 0; it < opts.probe_steps; ++it) {
    MatrixXd u(d, opts.probe_mc_samples);
    for (int j = 0; j < opts.probe_mc_samples; ++j) {
      for (int i = 0; i < d; ++i) u(i, j) = rng.uniform01();
    }
    const VectorXd w =
        VectorXd::Constant(u.cols(), 1.0 / double(u.cols()));
    ad::Tape tape;
    const int gb = tape.register_block(g.params());
    const int hb = tape.register_block(probe.params());
    const int pen = penalty_node(tape, g, gb, probe, hb, u, w, opts.q);
    auto grads = tape.backward(pen);
    adam.step(probe.params(), grads[1], opts.probe_lr, 0.5, 0.9, 1e-8);
    nets::project_to_lipschitz_in_place(probe, opts.L_H);
  }
  const auto grid = ot::grid_uniform(d, opts.grid_m);
  out.penalty_value = left_inverse_penalty(g, probe, opts.q, grid);
  out.encoder_cert = nets::certify_lipschitz(probe).product_bound;
  return out;
}

}  // namespace liperm::train
