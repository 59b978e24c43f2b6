#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "liperm/common.hpp"

namespace liperm::ad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Shape of one affine parameter block: a rows x cols weight matrix plus an
// optional length-rows bias.
struct LayerShape {
  int rows = 0;
  int cols = 0;
  bool bias = true;

  long weight_count() const { return static_cast<long>(rows) * cols; }
  long total() const { return weight_count() + (bias ? rows : 0); }
  bool operator==(const LayerShape&) const = default;
};

// Flat parameter storage with a per-layer (weights, bias) layout. The total
// length always equals the sum of the layer shapes.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<LayerShape> layout);

  const std::vector<LayerShape>& layout() const { return layout_; }
  int layer_count() const { return static_cast<int>(layout_.size()); }
  long size() const { return values.size(); }

  Eigen::Map<MatrixXd> weight(int layer);
  Eigen::Map<const MatrixXd> weight(int layer) const;
  Eigen::Map<VectorXd> bias(int layer);
  Eigen::Map<const VectorXd> bias(int layer) const;

  ParamVector zeros_like() const;

  VectorXd values;

 private:
  long offset_of(int layer) const;
  std::vector<LayerShape> layout_;
  std::vector<long> offsets_;
};

enum class Op : std::uint8_t {
  kLeaf,            // constant matrix
  kAffine,          // W x + b, per column
  kMatvecT,         // W^T x, per column (shares W with kAffine of same layer)
  kTanh,            //
  kLeakyRelu,       // slope alpha on the negative side, slope 1 at 0
  kLeakyReluPrime,  // elementwise derivative values; constant w.r.t. the tape
  kSquare,          //
  kHadamard,        //
  kAdd,             //
  kSub,             //
  kScale,           // c * x
  kAddConst,        // x + c
  kConstMinus,      // c - x
  kColSqNorm,       // 1 x B row of squared column norms
  kColNorm,         // 1 x B row of column norms; subgradient 0 at 0
  kAbs,             // elementwise; subgradient 0 at 0
  kPowConst,        // x^p elementwise; d/dx at 0 is 0 (1 when p == 1)
  kMeanAll,         // mean of all entries -> 1 x 1
  kSumAll,          // sum of all entries -> 1 x 1
  kMinSet,          // min over scalar nodes; subgradient to first minimizer
};

struct Node {
  Op op = Op::kLeaf;
  int a = -1;
  int b = -1;
  std::vector<int> extra;  // kMinSet operands
  int block = -1;          // parameter block for kAffine / kMatvecT
  int layer = -1;
  double c = 0.0;  // scalar constant / leaky slope / exponent
  MatrixXd value;
};

// Append-only record of a computation over registered parameter blocks.
// Nodes are stored in topological order by construction; backward walks the
// tape once in reverse. A tape is single-owner: independent tapes over
// independent parameter copies may run concurrently, there is no global
// state.
class Tape {
 public:
  // The referenced ParamVector must outlive the tape.
  int register_block(const ParamVector& params);

  int leaf(MatrixXd value);
  int affine(int block, int layer, int x);
  int matvec_transpose(int block, int layer, int x);
  int tanh(int x);
  int leaky_relu(int x, double alpha);
  int leaky_relu_prime(int x, double alpha);
  int square(int x);
  int hadamard(int x, int y);
  int add(int x, int y);
  int sub(int x, int y);
  int scale(int x, double c);
  int add_const(int x, double c);
  int const_minus(double c, int x);
  int colwise_squared_norm(int x);
  int colwise_norm(int x);
  int abs(int x);
  int pow_const(int x, double p);
  int mean_all(int x);
  int sum_all(int x);
  int min_set(std::span<const int> xs);

  const MatrixXd& value(int id) const { return nodes_[check_id(id)].value; }
  double scalar(int id) const;
  int size() const { return static_cast<int>(nodes_.size()); }
  bool empty() const { return nodes_.empty(); }
  int block_count() const { return static_cast<int>(blocks_.size()); }

  // Gradient of the scalar node `root` w.r.t. every registered block,
  // scaled by `seed` (d loss / d root). Each node is visited exactly once.
  std::vector<ParamVector> backward(int root, double seed = 1.0) const;

  // Drops all nodes but keeps registered blocks.
  void reset() { nodes_.clear(); }

 private:
  int push(Node n);
  int check_id(int id) const;
  const MatrixXd& val(int id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
  std::vector<const ParamVector*> blocks_;
};

using LossFn = std::function<double(const ParamVector&)>;

// Central-difference gradient estimate, step > 0. Testing oracle for
// backward(); intentionally independent of the tape machinery.
ParamVector finite_difference_gradient(const LossFn& loss,
                                       const ParamVector& params, double step);

}  // namespace liperm::ad
