#pragma once

#include "confae/activation.hpp"
#include "confae/linalg.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace confae::ad {

using linalg::Matrix;

struct NodeId {
  std::size_t index = 0;
};

/// Reverse-mode tape over dense matrix-valued nodes.
///
/// Tangent (JVP) and adjoint (VJP) sweeps of a network are recorded as
/// ordinary nodes, so one reverse sweep differentiates any scalar built from
/// them with respect to every variable leaf. Nodes are immutable once
/// recorded; `backward` may be called repeatedly and resets adjoints.
class Tape {
 public:
  NodeId constant(Matrix value);
  NodeId variable(Matrix value);

  NodeId matmul(NodeId a, NodeId b);             // a * b
  NodeId matmul_transposed(NodeId a, NodeId b);  // a^T * b
  NodeId add_bias(NodeId x, NodeId bias);        // bias column broadcast over columns of x
  NodeId activate(NodeId x, Activation act);
  NodeId activate_derivative(NodeId x, Activation act);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId divide(NodeId a, NodeId b);
  NodeId square(NodeId x);
  NodeId abs(NodeId x);
  NodeId affine(NodeId x, double scale, double shift);  // scale * x + shift

  NodeId repeat_columns(NodeId x, int times);  // column j -> columns j*times .. j*times+times-1
  NodeId column_sq_norms(NodeId x);            // 1 x cols
  NodeId block_mean(NodeId x, int block);      // mean over consecutive column blocks
  NodeId mean(NodeId x);                       // 1 x 1
  NodeId pairwise_distances(NodeId x);         // 1 x cols(cols-1)/2, pairs (i<j) in row-major order

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;
  bool requires_grad(NodeId id) const;

  /// Seeds d(root)/d(root) = 1 and propagates adjoints. `root` must be 1x1.
  void backward(NodeId root);
  bool has_gradients() const { return backward_done_; }

  /// Accumulated adjoint of a node; zeros if it does not depend on a variable.
  Matrix gradient(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeId id) const { return id.index < nodes_.size(); }

 private:
  enum class Op {
    Constant, Variable, MatMul, MatMulTransposed, AddBias, Activate, ActivateDerivative,
    Add, Sub, Hadamard, Divide, Square, Abs, Affine, RepeatColumns, ColumnSqNorms,
    BlockMean, Mean, PairwiseDistances
  };

  struct Node {
    Op op = Op::Constant;
    Matrix value;
    Matrix adjoint;
    std::array<std::size_t, 2> inputs{0, 0};
    Activation act{};
    double scale = 1.0;
    int count = 0;
    bool needs_grad = false;
  };

  NodeId push(Node node);
  const Node& at(NodeId id) const;
  void accumulate(std::size_t index, const Matrix& delta);
  void propagate(std::size_t index);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace confae::ad
