#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "liperm/ad.hpp"
#include "liperm/measure.hpp"

namespace liperm::nets {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kIdentity, kTanh, kLeakyRelu };

enum class LipschitzKind { kUnconstrained, kCertified, kGradientPenalized };

struct LipschitzMode {
  LipschitzKind kind = LipschitzKind::kUnconstrained;
  double bound = 0.0;  // the target constant in certified mode

  static LipschitzMode unconstrained() { return {}; }
  static LipschitzMode certified(double L) {
    return {LipschitzKind::kCertified, L};
  }
  static LipschitzMode gradient_penalized() {
    return {LipschitzKind::kGradientPenalized, 0.0};
  }
};

enum class SpectralMethod { kPowerIteration, kExactSvd };

// Per-layer spectral-norm upper bounds and their product. Activations and
// the output squash have slope <= 1, so the product over affine layers is a
// sound upper bound on the network's Lipschitz constant.
struct LipschitzCertificate {
  std::vector<double> per_layer_norms;
  double product_bound = 0.0;
  SpectralMethod method = SpectralMethod::kPowerIteration;
};

// Fully connected map between unit hypercubes. Parameters live in one flat
// ParamVector; evaluation is const and safe to share across threads, while
// training mutates a single owned copy.
class MlpNetwork {
 public:
  MlpNetwork() = default;

  // dims = {in, h1, ..., hk, out}; hidden activation applied after every
  // layer but the last.
  MlpNetwork(std::vector<int> dims, Activation hidden, bool squash,
             LipschitzMode mode, double leaky_alpha = 0.2);

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int layer_count() const { return static_cast<int>(dims_.size()) - 1; }
  bool squash() const { return squash_; }
  const LipschitzMode& mode() const { return mode_; }
  Activation hidden_activation() const { return hidden_; }
  double leaky_alpha() const { return leaky_alpha_; }

  ad::ParamVector& params() { return params_; }
  const ad::ParamVector& params() const { return params_; }

  void init_random(std::uint64_t seed);

  // Columns are samples.
  MatrixXd eval(const MatrixXd& input) const;

  // Records the forward pass on the tape; `block` must refer to this
  // network's params() registered on the same tape.
  int forward_taped(ad::Tape& tape, int block, int input_node) const;

  // For scalar-output, non-squashed networks: returns (output row node,
  // input-gradient matrix node). The gradient is built from first-order
  // tape primitives, so backward() through it differentiates the gradient
  // penalty w.r.t. the parameters.
  std::pair<int, int> value_and_input_gradient(ad::Tape& tape, int block,
                                               int input_node) const;

  std::string to_json_string() const;
  static MlpNetwork from_json_string(const std::string& text);
  void save(const std::string& path) const;
  static MlpNetwork load(const std::string& path);

 private:
  std::vector<int> dims_;
  Activation hidden_ = Activation::kTanh;
  bool squash_ = false;
  LipschitzMode mode_;
  double leaky_alpha_ = 0.2;
  ad::ParamVector params_;
};

// g in Lip_{L_G}([0,1]^d -> [0,1]^D); output squashed into the unit box.
MlpNetwork make_generator(int d, int D, const std::vector<int>& widths,
                          LipschitzMode mode, std::uint64_t seed,
                          Activation hidden = Activation::kTanh);

// h in Lip_{L_H}([0,1]^D -> [0,1]^d); certified mode is mandatory because
// L_H enters the bound formulas.
MlpNetwork make_encoder(int D, int d, const std::vector<int>& widths,
                        double L_H, std::uint64_t seed,
                        Activation hidden = Activation::kTanh);

// Scalar critic approximating Lip_1 via a gradient penalty during training.
MlpNetwork make_critic(int D, const std::vector<int>& widths,
                       std::uint64_t seed,
                       Activation hidden = Activation::kTanh);

// Sound spectral-norm upper bound of one matrix.
double spectral_norm_bound(const MatrixXd& w, SpectralMethod method);

LipschitzCertificate certify_lipschitz(
    const MlpNetwork& net, SpectralMethod method = SpectralMethod::kPowerIteration);

// Rescales every layer by min(1, (L / product_bound)^{1/num_layers}); the
// result re-certifies at or below L and re-projecting is a bit-exact no-op.
MlpNetwork project_to_lipschitz(const MlpNetwork& net, double L);
void project_to_lipschitz_in_place(MlpNetwork& net, double L);

// Applies the network to every atom; weights are carried over and
// coincident images are merged.
ot::DiscreteMeasure pushforward(const MlpNetwork& g,
                                const ot::DiscreteMeasure& latent);

}  // namespace liperm::nets
