#include "liperm/nets.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <nlohmann/json.hpp>

#include "liperm/io_util.hpp"
#include "liperm/rng.hpp"

namespace liperm::nets {

namespace {

using nlohmann::json;

// Slope-1 sigmoid onto (0,1): 0.5 + 0.5 tanh(2x - 1). Its derivative is
// sech^2(2x-1) <= 1, so squashing never loosens a Lipschitz certificate.
double squash_scalar(double x) { return 0.5 + 0.5 * std::tanh(2.0 * x - 1.0); }

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kLeakyRelu: return "leaky_relu";
  }
  return "?";
}

Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "tanh") return Activation::kTanh;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  throw ConfigError("unknown activation: " + s);
}

std::string mode_name(LipschitzKind k) {
  switch (k) {
    case LipschitzKind::kUnconstrained: return "unconstrained";
    case LipschitzKind::kCertified: return "certified";
    case LipschitzKind::kGradientPenalized: return "gradient_penalized";
  }
  return "?";
}

LipschitzKind mode_from_name(const std::string& s) {
  if (s == "unconstrained") return LipschitzKind::kUnconstrained;
  if (s == "certified") return LipschitzKind::kCertified;
  if (s == "gradient_penalized") return LipschitzKind::kGradientPenalized;
  throw ConfigError("unknown lipschitz mode: " + s);
}

}  // namespace

MlpNetwork::MlpNetwork(std::vector<int> dims, Activation hidden, bool squash,
                       LipschitzMode mode, double leaky_alpha)
    : dims_(std::move(dims)),
      hidden_(hidden),
      squash_(squash),
      mode_(mode),
      leaky_alpha_(leaky_alpha) {
  if (dims_.size() < 2) throw ConfigError("MlpNetwork: need at least 1 layer");
  for (int d : dims_) {
    if (d < 1) throw ConfigError("MlpNetwork: nonpositive layer width");
  }
  if (hidden_ == Activation::kLeakyRelu &&
      (leaky_alpha_ <= 0.0 || leaky_alpha_ > 1.0)) {
    throw ConfigError("MlpNetwork: leaky slope must be in (0,1]");
  }
  if (mode_.kind == LipschitzKind::kCertified && !(mode_.bound > 0.0)) {
    throw ConfigError("MlpNetwork: certified mode needs a positive bound");
  }
  std::vector<ad::LayerShape> layout;
  for (size_t k = 0; k + 1 < dims_.size(); ++k) {
    layout.push_back({dims_[k + 1], dims_[k], true});
  }
  params_ = ad::ParamVector(std::move(layout));
}

void MlpNetwork::init_random(std::uint64_t seed) {
  Rng rng(seed);
  for (int k = 0; k < layer_count(); ++k) {
    auto w = params_.weight(k);
    const double a = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (long j = 0; j < w.cols(); ++j) {
      for (long i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-a, a);
    }
    params_.bias(k).setZero();
  }
  if (mode_.kind == LipschitzKind::kCertified) {
    project_to_lipschitz_in_place(*this, mode_.bound);
  }
}

MatrixXd MlpNetwork::eval(const MatrixXd& input) const {
  if (input.rows() != in_dim()) {
    throw ConfigError("MlpNetwork::eval: input dimension mismatch");
  }
  MatrixXd x = input;
  for (int k = 0; k < layer_count(); ++k) {
    MatrixXd z = params_.weight(k) * x;
    z.colwise() += VectorXd(params_.bias(k));
    if (k + 1 < layer_count()) {
      switch (hidden_) {
        case Activation::kTanh:
          z = z.array().tanh();
          break;
        case Activation::kLeakyRelu: {
          const double alpha = leaky_alpha_;
          z = z.unaryExpr(
              [alpha](double v) { return v >= 0.0 ? v : alpha * v; });
          break;
        }
        case Activation::kIdentity:
          break;
      }
    }
    x = std::move(z);
  }
  if (squash_) x = x.unaryExpr(&squash_scalar);
  return x;
}

int MlpNetwork::forward_taped(ad::Tape& tape, int block,
                              int input_node) const {
  if (tape.value(input_node).rows() != in_dim()) {
    throw ConfigError("MlpNetwork::forward_taped: input dimension mismatch");
  }
  int x = input_node;
  for (int k = 0; k < layer_count(); ++k) {
    x = tape.affine(block, k, x);
    if (k + 1 < layer_count()) {
      switch (hidden_) {
        case Activation::kTanh:
          x = tape.tanh(x);
          break;
        case Activation::kLeakyRelu:
          x = tape.leaky_relu(x, leaky_alpha_);
          break;
        case Activation::kIdentity:
          break;
      }
    }
  }
  if (squash_) {
    // 0.5 + 0.5 tanh(2x - 1)
    x = tape.add_const(tape.scale(x, 2.0), -1.0);
    x = tape.tanh(x);
    x = tape.add_const(tape.scale(x, 0.5), 0.5);
  }
  return x;
}

std::pair<int, int> MlpNetwork::value_and_input_gradient(
    ad::Tape& tape, int block, int input_node) const {
  if (out_dim() != 1 || squash_) {
    throw UsageError("input gradient requires a scalar, non-squashed network");
  }
  const long batch = tape.value(input_node).cols();

  std::vector<int> zs(static_cast<size_t>(layer_count()), -1);
  std::vector<int> as(static_cast<size_t>(layer_count()), -1);
  int x = input_node;
  for (int k = 0; k < layer_count(); ++k) {
    const int z = tape.affine(block, k, x);
    zs[static_cast<size_t>(k)] = z;
    int a = z;
    if (k + 1 < layer_count()) {
      switch (hidden_) {
        case Activation::kTanh:
          a = tape.tanh(z);
          break;
        case Activation::kLeakyRelu:
          a = tape.leaky_relu(z, leaky_alpha_);
          break;
        case Activation::kIdentity:
          break;
      }
    }
    as[static_cast<size_t>(k)] = a;
    x = a;
  }
  const int out = as.back();

  // Reverse sweep expressed in forward primitives: s_k = d out / d z_k.
  int s = tape.leaf(MatrixXd::Ones(1, batch));
  for (int k = layer_count() - 1; k >= 1; --k) {
    int t = tape.matvec_transpose(block, k, s);  // d out / d a_{k-1}
    switch (hidden_) {
      case Activation::kTanh: {
        const int dphi =
            tape.const_minus(1.0, tape.square(as[static_cast<size_t>(k - 1)]));
        t = tape.hadamard(t, dphi);
        break;
      }
      case Activation::kLeakyRelu: {
        const int dphi = tape.leaky_relu_prime(zs[static_cast<size_t>(k - 1)],
                                               leaky_alpha_);
        t = tape.hadamard(t, dphi);
        break;
      }
      case Activation::kIdentity:
        break;
    }
    s = t;
  }
  const int grad = tape.matvec_transpose(block, 0, s);
  return {out, grad};
}

MlpNetwork make_generator(int d, int D, const std::vector<int>& widths,
                          LipschitzMode mode, std::uint64_t seed,
                          Activation hidden) {
  if (d < 1 || D < d) throw ConfigError("make_generator: need 1 <= d <= D");
  if (widths.empty()) throw ConfigError("make_generator: empty widths");
  std::vector<int> dims{d};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(D);
  MlpNetwork net(std::move(dims), hidden, /*squash=*/true, mode);
  net.init_random(seed);
  return net;
}

MlpNetwork make_encoder(int D, int d, const std::vector<int>& widths,
                        double L_H, std::uint64_t seed, Activation hidden) {
  if (d < 1 || D < 1) throw ConfigError("make_encoder: bad dimensions");
  if (widths.empty()) throw ConfigError("make_encoder: empty widths");
  std::vector<int> dims{D};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(d);
  MlpNetwork net(std::move(dims), hidden, /*squash=*/true,
                 LipschitzMode::certified(L_H));
  net.init_random(seed);
  return net;
}

MlpNetwork make_critic(int D, const std::vector<int>& widths,
                       std::uint64_t seed, Activation hidden) {
  if (D < 1) throw ConfigError("make_critic: bad input dimension");
  if (widths.empty()) throw ConfigError("make_critic: empty widths");
  std::vector<int> dims{D};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(1);
  MlpNetwork net(std::move(dims), hidden, /*squash=*/false,
                 LipschitzMode::gradient_penalized());
  net.init_random(seed);
  return net;
}

double spectral_norm_bound(const MatrixXd& w, SpectralMethod method) {
  if (w.size() == 0) return 0.0;
  if (method == SpectralMethod::kExactSvd) {
    Eigen::JacobiSVD<MatrixXd> svd(w);
    return svd.singularValues()[0] * (1.0 + 1e-12);
  }
  // Power iteration on w^T w with a fixed deterministic start; 100
  // iterations, tolerance 1e-8, and a 1e-6 relative slack for soundness.
  VectorXd v(w.cols());
  for (long i = 0; i < v.size(); ++i) {
    v[i] = 1.0 + 1e-3 * static_cast<double>(i % 7);
  }
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 100; ++it) {
    VectorXd u = w * v;
    const double s = u.norm();
    if (s == 0.0) return 0.0;
    VectorXd next = w.transpose() * u;
    const double nn = next.norm();
    if (nn == 0.0) return 0.0;
    v = next / nn;
    if (std::abs(s - sigma) <= 1e-8 * std::max(1.0, s)) {
      sigma = s;
      break;
    }
    sigma = s;
  }
  sigma = (w * v).norm();
  return sigma * (1.0 + 1e-6);
}

LipschitzCertificate certify_lipschitz(const MlpNetwork& net,
                                       SpectralMethod method) {
  LipschitzCertificate cert;
  cert.method = method;
  double product = 1.0;
  for (int k = 0; k < net.layer_count(); ++k) {
    const double s = spectral_norm_bound(net.params().weight(k), method);
    cert.per_layer_norms.push_back(s);
    product *= s;
  }
  cert.product_bound = product;
  return cert;
}

void project_to_lipschitz_in_place(MlpNetwork& net, double L) {
  if (net.mode().kind != LipschitzKind::kCertified) {
    throw UsageError("project_to_lipschitz: network is not in certified mode");
  }
  if (!(L > 0.0)) throw ConfigError("project_to_lipschitz: need L > 0");
  const auto cert = certify_lipschitz(net);
  if (cert.product_bound <= L) return;
  // The (1 - 1e-10) shave keeps the re-certified product strictly below L,
  // which makes projection idempotent despite rounding.
  const double s =
      std::pow(L / cert.product_bound, 1.0 / net.layer_count()) *
      (1.0 - 1e-10);
  for (int k = 0; k < net.layer_count(); ++k) {
    net.params().weight(k) *= s;
  }
}

MlpNetwork project_to_lipschitz(const MlpNetwork& net, double L) {
  MlpNetwork out = net;
  project_to_lipschitz_in_place(out, L);
  return out;
}

ot::DiscreteMeasure pushforward(const MlpNetwork& g,
                                const ot::DiscreteMeasure& latent) {
  if (latent.dim() != g.in_dim()) {
    throw ConfigError("pushforward: latent dimension mismatch");
  }
  MatrixXd images = g.eval(latent.points());
  return ot::DiscreteMeasure(std::move(images), latent.weights())
      .deduplicated();
}

std::string MlpNetwork::to_json_string() const {
  json j;
  j["in_dim"] = in_dim();
  j["out_dim"] = out_dim();
  j["dims"] = dims_;
  j["hidden_activation"] = activation_name(hidden_);
  j["squash"] = squash_;
  j["leaky_alpha"] = leaky_alpha_;
  j["lipschitz_mode"] = {{"kind", mode_name(mode_.kind)},
                         {"bound", mode_.bound}};
  j["params"] = std::vector<double>(
      params_.values.data(), params_.values.data() + params_.values.size());
  return j.dump();
}

MlpNetwork MlpNetwork::from_json_string(const std::string& text) {
  json j = json::parse(text);
  LipschitzMode mode;
  mode.kind = mode_from_name(j.at("lipschitz_mode").at("kind"));
  mode.bound = j.at("lipschitz_mode").at("bound");
  MlpNetwork net(j.at("dims").get<std::vector<int>>(),
                 activation_from_name(j.at("hidden_activation")),
                 j.at("squash").get<bool>(), mode,
                 j.at("leaky_alpha").get<double>());
  const auto values = j.at("params").get<std::vector<double>>();
  if (static_cast<long>(values.size()) != net.params_.values.size()) {
    throw ConfigError("checkpoint: parameter count mismatch");
  }
  for (long i = 0; i < net.params_.values.size(); ++i) {
    net.params_.values[i] = values[static_cast<size_t>(i)];
  }
  return net;
}

void MlpNetwork::save(const std::string& path) const {
  atomic_write_file(path, to_json_string());
}

MlpNetwork MlpNetwork::load(const std::string& path) {
  return from_json_string(read_file(path));
}

}  // namespace liperm::nets
