#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "liperm/ad.hpp"
#include "liperm/measure.hpp"
#include "liperm/nets.hpp"
#include "liperm/ot.hpp"

namespace liperm::train {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ot::DiscreteMeasure;

struct LipermObjectiveConfig {
  double lambda = 1.0;  // left-inverse penalty weight, >= 0
  double q = 2.0;       // penalty exponent, >= 1
  int mc_samples = 256;
  int critic_steps = 5;
  int encoder_steps = 5;
  int generator_steps = 1;
  double gp_weight = 10.0;
  double lr_critic = 1e-3;
  double lr_encoder = 1e-3;
  double lr_generator = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  int iterations = 1000;
  std::uint64_t seed = 1;
  double divergence_threshold = 1e6;
  // Full batch is the default for n <= 1024; set > 0 to minibatch the data
  // term instead.
  int batch_size = 0;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double ipm_est = 0.0;
  double penalty_est = 0.0;
  double objective = 0.0;
  double critic_gp = 0.0;
  double lip_cert_h = 0.0;
};

struct TrainingTrace {
  std::vector<IterationRecord> records;
  bool diverged = false;
  int diverged_iteration = -1;
  std::string message;

  // CSV schema: iter,ipm_est,penalty_est,objective,critic_gp,lip_cert_h
  void save_csv(const std::string& path) const;
  std::string to_csv() const;
};

struct AdamState {
  VectorXd m, v;
  long t = 0;

  void init(long size);
  void step(ad::ParamVector& params, const ad::ParamVector& grad, double lr,
            double beta1, double beta2, double eps);
};

// Monte-Carlo estimate of the left-inverse penalty
// sum_i w_i ||h(g(u_i)) - u_i||^q over the given latent atoms.
double left_inverse_penalty(const nets::MlpNetwork& g,
                            const nets::MlpNetwork& h, double q,
                            const DiscreteMeasure& latent_samples);

// Tape node for the same quantity; differentiable through both networks.
int penalty_node(ad::Tape& tape, const nets::MlpNetwork& g, int g_block,
                 const nets::MlpNetwork& h, int h_block, const MatrixXd& u,
                 const VectorXd& weights, double q);

// WGAN-GP critic loss:
//   -|E_data f - E_gen f| + gp_weight * E_interp (||grad_x f|| - 1)^2
// with interpolates drawn per the given seed. The gap enters through |.|
// because the Lip_1 test class is sign-symmetric; on near-symmetric
// supports the signed form can trap the critic in the inverted
// gradient-penalty well.
double ipm_critic_loss(const nets::MlpNetwork& f,
                       const DiscreteMeasure& gen_samples,
                       const DiscreteMeasure& data, double gp_weight,
                       std::uint64_t seed);

struct TrainResult {
  nets::MlpNetwork g, h, f;
  TrainingTrace trace;
};

struct ArchSpec {
  int latent_dim = 2;
  std::vector<int> gen_widths{64, 64, 64};
  std::vector<int> enc_widths{64, 64, 64};
  std::vector<int> critic_widths{64, 64, 64};
  nets::Activation hidden = nets::Activation::kTanh;
  double L_H = 8.0;
  nets::LipschitzMode gen_mode = nets::LipschitzMode::unconstrained();
};

// Alternating minimization: critic ascent on the IPM term, encoder descent
// on the penalty (the inner min over H), generator descent on
// ipm + lambda * penalty; the encoder is re-projected into Lip_{L_H} after
// every update. Owns the three networks, their optimizer states and the
// run's RNG stream.
class LipermTrainer {
 public:
  LipermTrainer(nets::MlpNetwork g, nets::MlpNetwork h, nets::MlpNetwork f,
                LipermObjectiveConfig cfg);

  // One outer iteration; throws DivergenceError on non-finite losses.
  IterationRecord step(const DiscreteMeasure& data);

  // Full outer loop. A divergence stops the loop and is recorded on the
  // trace rather than escaping.
  TrainResult run(const DiscreteMeasure& data);

  const nets::MlpNetwork& generator() const { return g_; }
  const nets::MlpNetwork& encoder() const { return h_; }
  const nets::MlpNetwork& critic() const { return f_; }
  const TrainingTrace& trace() const { return trace_; }

 private:
  double critic_update(const MatrixXd& data_pts, const VectorXd& data_w,
                       IterationRecord& rec);
  double encoder_update();
  double generator_update(IterationRecord& rec);
  void check_finite(double loss, const char* what);
  MatrixXd draw_latents(int count);

  nets::MlpNetwork g_, h_, f_;
  LipermObjectiveConfig cfg_;
  AdamState adam_g_, adam_h_, adam_f_;
  Rng rng_;
  TrainingTrace trace_;
  int iter_ = 0;
  double witness_sign_ = 1.0;  // sign of the last critic mean gap
};

// Builds seeded networks from the arch spec and runs the configured loop.
TrainResult train(const DiscreteMeasure& data, const LipermObjectiveConfig& cfg,
                  const ArchSpec& arch);

using PStarSampler =
    std::function<DiscreteMeasure(int n, std::uint64_t seed)>;

struct EvalOptions {
  int m_eval = 2048;
  int grid_m = 32;  // latent grid for the final probe-penalty estimate
  std::vector<int> probe_widths{64, 64, 64};
  nets::Activation hidden = nets::Activation::kTanh;
  double L_H = 8.0;
  double q = 2.0;
  int probe_steps = 400;
  int probe_mc_samples = 256;
  double probe_lr = 2e-3;
  std::uint64_t seed = 1;
  ot::ExactW1Options w1;
};

struct EvalResult {
  double diversity_gap = 0.0;           // exact W1(g#U sample, data)
  std::optional<double> accuracy;       // exact W1(g#U sample, fresh P* draw)
  double penalty_value = 0.0;           // via a freshly optimized probe encoder
  double encoder_cert = 0.0;            // probe encoder's certified constant
};

EvalResult evaluate_generator(const nets::MlpNetwork& g,
                              const DiscreteMeasure& data,
                              const PStarSampler* p_star_sampler,
                              const EvalOptions& opts);

}  // namespace liperm::train
