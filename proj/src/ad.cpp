#include "liperm/ad.hpp"

#include <cmath>
#include <numeric>

namespace liperm::ad {

ParamVector::ParamVector(std::vector<LayerShape> layout)
    : layout_(std::move(layout)) {
  offsets_.reserve(layout_.size());
  long total = 0;
  for (const auto& shape : layout_) {
    if (shape.rows <= 0 || shape.cols <= 0) {
      throw ConfigError("ParamVector: layer shapes must be positive");
    }
    offsets_.push_back(total);
    total += shape.total();
  }
  values = VectorXd::Zero(total);
}

long ParamVector::offset_of(int layer) const {
  if (layer < 0 || layer >= layer_count()) {
    throw UsageError("ParamVector: layer index out of range");
  }
  return offsets_[layer];
}

Eigen::Map<MatrixXd> ParamVector::weight(int layer) {
  const auto& s = layout_[static_cast<size_t>(layer)];
  return {values.data() + offset_of(layer), s.rows, s.cols};
}

Eigen::Map<const MatrixXd> ParamVector::weight(int layer) const {
  const auto& s = layout_[static_cast<size_t>(layer)];
  return {values.data() + offset_of(layer), s.rows, s.cols};
}

Eigen::Map<VectorXd> ParamVector::bias(int layer) {
  const auto& s = layout_[static_cast<size_t>(layer)];
  if (!s.bias) throw UsageError("ParamVector: layer has no bias");
  return {values.data() + offset_of(layer) + s.weight_count(), s.rows};
}

Eigen::Map<const VectorXd> ParamVector::bias(int layer) const {
  const auto& s = layout_[static_cast<size_t>(layer)];
  if (!s.bias) throw UsageError("ParamVector: layer has no bias");
  return {values.data() + offset_of(layer) + s.weight_count(), s.rows};
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out(layout_);
  return out;
}

int Tape::register_block(const ParamVector& params) {
  blocks_.push_back(&params);
  return static_cast<int>(blocks_.size()) - 1;
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::check_id(int id) const {
  if (id < 0 || id >= size()) throw UsageError("Tape: node id out of range");
  return id;
}

int Tape::leaf(MatrixXd value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

int Tape::affine(int block, int layer, int x) {
  check_id(x);
  if (block < 0 || block >= block_count()) {
    throw UsageError("Tape: unknown parameter block");
  }
  const ParamVector& p = *blocks_[static_cast<size_t>(block)];
  const auto W = p.weight(layer);
  const MatrixXd& in = val(x);
  if (W.cols() != in.rows()) {
    throw ConfigError("Tape: affine input dimension mismatch");
  }
  Node n;
  n.op = Op::kAffine;
  n.a = x;
  n.block = block;
  n.layer = layer;
  n.value = W * in;
  if (p.layout()[static_cast<size_t>(layer)].bias) {
    n.value.colwise() += p.bias(layer);
  }
  return push(std::move(n));
}

int Tape::matvec_transpose(int block, int layer, int x) {
  check_id(x);
  if (block < 0 || block >= block_count()) {
    throw UsageError("Tape: unknown parameter block");
  }
  const ParamVector& p = *blocks_[static_cast<size_t>(block)];
  const auto W = p.weight(layer);
  const MatrixXd& in = val(x);
  if (W.rows() != in.rows()) {
    throw ConfigError("Tape: transposed matvec dimension mismatch");
  }
  Node n;
  n.op = Op::kMatvecT;
  n.a = x;
  n.block = block;
  n.layer = layer;
  n.value = W.transpose() * in;
  return push(std::move(n));
}

int Tape::tanh(int x) {
  Node n;
  n.op = Op::kTanh;
  n.a = check_id(x);
  n.value = val(x).array().tanh();
  return push(std::move(n));
}

int Tape::leaky_relu(int x, double alpha) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.a = check_id(x);
  n.c = alpha;
  n.value = val(x).unaryExpr(
      [alpha](double v) { return v >= 0.0 ? v : alpha * v; });
  return push(std::move(n));
}

int Tape::leaky_relu_prime(int x, double alpha) {
  Node n;
  n.op = Op::kLeakyReluPrime;
  n.a = check_id(x);
  n.c = alpha;
  n.value = val(x).unaryExpr(
      [alpha](double v) { return v >= 0.0 ? 1.0 : alpha; });
  return push(std::move(n));
}

int Tape::square(int x) {
  Node n;
  n.op = Op::kSquare;
  n.a = check_id(x);
  n.value = val(x).array().square();
  return push(std::move(n));
}

int Tape::hadamard(int x, int y) {
  check_id(x);
  check_id(y);
  if (val(x).rows() != val(y).rows() || val(x).cols() != val(y).cols()) {
    throw ConfigError("Tape: hadamard shape mismatch");
  }
  Node n;
  n.op = Op::kHadamard;
  n.a = x;
  n.b = y;
  n.value = val(x).cwiseProduct(val(y));
  return push(std::move(n));
}

int Tape::add(int x, int y) {
  check_id(x);
  check_id(y);
  if (val(x).rows() != val(y).rows() || val(x).cols() != val(y).cols()) {
    throw ConfigError("Tape: add shape mismatch");
  }
  Node n;
  n.op = Op::kAdd;
  n.a = x;
  n.b = y;
  n.value = val(x) + val(y);
  return push(std::move(n));
}

int Tape::sub(int x, int y) {
  check_id(x);
  check_id(y);
  if (val(x).rows() != val(y).rows() || val(x).cols() != val(y).cols()) {
    throw ConfigError("Tape: sub shape mismatch");
  }
  Node n;
  n.op = Op::kSub;
  n.a = x;
  n.b = y;
  n.value = val(x) - val(y);
  return push(std::move(n));
}

int Tape::scale(int x, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = check_id(x);
  n.c = c;
  n.value = c * val(x);
  return push(std::move(n));
}

int Tape::add_const(int x, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = check_id(x);
  n.c = c;
  n.value = val(x).array() + c;
  return push(std::move(n));
}

int Tape::const_minus(double c, int x) {
  Node n;
  n.op = Op::kConstMinus;
  n.a = check_id(x);
  n.c = c;
  n.value = c - val(x).array();
  return push(std::move(n));
}

int Tape::colwise_squared_norm(int x) {
  Node n;
  n.op = Op::kColSqNorm;
  n.a = check_id(x);
  n.value = val(x).colwise().squaredNorm();
  return push(std::move(n));
}

int Tape::colwise_norm(int x) {
  Node n;
  n.op = Op::kColNorm;
  n.a = check_id(x);
  n.value = val(x).colwise().norm();
  return push(std::move(n));
}

int Tape::abs(int x) {
  Node n;
  n.op = Op::kAbs;
  n.a = check_id(x);
  n.value = val(x).array().abs();
  return push(std::move(n));
}

int Tape::pow_const(int x, double p) {
  Node n;
  n.op = Op::kPowConst;
  n.a = check_id(x);
  n.c = p;
  n.value = val(x).array().pow(p);
  return push(std::move(n));
}

int Tape::mean_all(int x) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = check_id(x);
  n.value = MatrixXd::Constant(1, 1, val(x).mean());
  return push(std::move(n));
}

int Tape::sum_all(int x) {
  Node n;
  n.op = Op::kSumAll;
  n.a = check_id(x);
  n.value = MatrixXd::Constant(1, 1, val(x).sum());
  return push(std::move(n));
}

int Tape::min_set(std::span<const int> xs) {
  if (xs.empty()) throw UsageError("Tape: min over empty set");
  Node n;
  n.op = Op::kMinSet;
  n.extra.assign(xs.begin(), xs.end());
  double best = std::numeric_limits<double>::infinity();
  for (int id : xs) {
    check_id(id);
    if (val(id).size() != 1) {
      throw UsageError("Tape: min_set operands must be scalars");
    }
    best = std::min(best, val(id)(0, 0));
  }
  n.value = MatrixXd::Constant(1, 1, best);
  return push(std::move(n));
}

double Tape::scalar(int id) const {
  const MatrixXd& v = value(id);
  if (v.size() != 1) throw UsageError("Tape: node is not a scalar");
  return v(0, 0);
}

std::vector<ParamVector> Tape::backward(int root, double seed) const {
  if (empty()) throw UsageError("Tape: backward on empty tape");
  check_id(root);
  if (nodes_[static_cast<size_t>(root)].value.size() != 1) {
    throw UsageError("Tape: backward root must be scalar");
  }

  std::vector<MatrixXd> adjoint(nodes_.size());
  auto accum = [&](int id, const MatrixXd& g) {
    if (adjoint[static_cast<size_t>(id)].size() == 0) {
      adjoint[static_cast<size_t>(id)] = g;
    } else {
      adjoint[static_cast<size_t>(id)] += g;
    }
  };

  std::vector<ParamVector> grads;
  grads.reserve(blocks_.size());
  for (const ParamVector* p : blocks_) grads.push_back(p->zeros_like());

  adjoint[static_cast<size_t>(root)] = MatrixXd::Constant(1, 1, seed);

  for (int id = root; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const MatrixXd& g = adjoint[static_cast<size_t>(id)];
    if (g.size() == 0) continue;  // node not on a path to root

    switch (n.op) {
      case Op::kLeaf:
      case Op::kLeakyReluPrime:
        break;
      case Op::kAffine: {
        const ParamVector& p = *blocks_[static_cast<size_t>(n.block)];
        ParamVector& gp = grads[static_cast<size_t>(n.block)];
        const MatrixXd& in = val(n.a);
        gp.weight(n.layer) += g * in.transpose();
        if (p.layout()[static_cast<size_t>(n.layer)].bias) {
          gp.bias(n.layer) += g.rowwise().sum();
        }
        accum(n.a, p.weight(n.layer).transpose() * g);
        break;
      }
      case Op::kMatvecT: {
        const ParamVector& p = *blocks_[static_cast<size_t>(n.block)];
        ParamVector& gp = grads[static_cast<size_t>(n.block)];
        const MatrixXd& in = val(n.a);
        gp.weight(n.layer) += in * g.transpose();
        accum(n.a, p.weight(n.layer) * g);
        break;
      }
      case Op::kTanh:
        accum(n.a, g.cwiseProduct(
                       (1.0 - n.value.array().square()).matrix()));
        break;
      case Op::kLeakyRelu: {
        const double alpha = n.c;
        MatrixXd m = val(n.a).unaryExpr(
            [alpha](double v) { return v >= 0.0 ? 1.0 : alpha; });
        accum(n.a, g.cwiseProduct(m));
        break;
      }
      case Op::kSquare:
        accum(n.a, 2.0 * g.cwiseProduct(val(n.a)));
        break;
      case Op::kHadamard:
        accum(n.a, g.cwiseProduct(val(n.b)));
        accum(n.b, g.cwiseProduct(val(n.a)));
        break;
      case Op::kAdd:
        accum(n.a, g);
        accum(n.b, g);
        break;
      case Op::kSub:
        accum(n.a, g);
        accum(n.b, -g);
        break;
      case Op::kScale:
        accum(n.a, n.c * g);
        break;
      case Op::kAddConst:
        accum(n.a, g);
        break;
      case Op::kConstMinus:
        accum(n.a, -g);
        break;
      case Op::kColSqNorm: {
        MatrixXd d = 2.0 * val(n.a);
        for (long j = 0; j < d.cols(); ++j) d.col(j) *= g(0, j);
        accum(n.a, d);
        break;
      }
      case Op::kColNorm: {
        const MatrixXd& in = val(n.a);
        MatrixXd d = MatrixXd::Zero(in.rows(), in.cols());
        for (long j = 0; j < in.cols(); ++j) {
          const double nrm = n.value(0, j);
          if (nrm > 0.0) d.col(j) = (g(0, j) / nrm) * in.col(j);
        }
        accum(n.a, d);
        break;
      }
      case Op::kAbs: {
        MatrixXd s = val(n.a).unaryExpr([](double v) {
          return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        });
        accum(n.a, g.cwiseProduct(s));
        break;
      }
      case Op::kPowConst: {
        const double p = n.c;
        MatrixXd d = val(n.a).unaryExpr([p](double v) {
          if (v == 0.0) return p == 1.0 ? 1.0 : 0.0;
          return p * std::pow(v, p - 1.0);
        });
        accum(n.a, g.cwiseProduct(d));
        break;
      }
      case Op::kMeanAll: {
        const double s = g(0, 0) / static_cast<double>(val(n.a).size());
        accum(n.a, MatrixXd::Constant(val(n.a).rows(), val(n.a).cols(), s));
        break;
      }
      case Op::kSumAll:
        accum(n.a, MatrixXd::Constant(val(n.a).rows(), val(n.a).cols(),
                                      g(0, 0)));
        break;
      case Op::kMinSet: {
        for (int cand : n.extra) {
          if (val(cand)(0, 0) == n.value(0, 0)) {
            accum(cand, g);  // first minimizer takes the subgradient
            break;
          }
        }
        break;
      }
    }
  }
  return grads;
}

ParamVector finite_difference_gradient(const LossFn& loss,
                                       const ParamVector& params,
                                       double step) {
  if (!(step > 0.0)) throw ConfigError("finite differences need step > 0");
  ParamVector probe = params;
  ParamVector grad = params.zeros_like();
  for (long i = 0; i < params.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double up = loss(probe);
    probe.values[i] = saved - step;
    const double down = loss(probe);
    probe.values[i] = saved;
    grad.values[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace liperm::ad
