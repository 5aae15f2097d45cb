#pragma once

#include <cstdint>
#include <vector>

#include "loop_pe/tensor.hpp"

namespace loop_pe {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  SoftmaxRows,
  Add,
  Sub,
  Mul,
  Div,
  MaxElem,
  AddScalar,
  SubScalar,
  MulScalar,
  DivScalar,
  MaxScalar,
  Relu,
  Square,
  Scale,
  AddRowVec,
  SumAll,
  ColSums,
  MaxAll,
  ConcatCols,
};

/// Gradients of one backward pass, indexed by tape node. Shape-matched to
/// the node values they differentiate.
class GradientSet {
 public:
  explicit GradientSet(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  const Tensor& at(NodeId id) const { return grads_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Append-only record of primitive operations. Construction order is a
/// topological order: every node's parents precede it. All kernels
/// accumulate in ascending index order, so forward evaluation is bitwise
/// deterministic.
///
/// Subgradients at kinks take the attained branch; ties go to the first
/// operand. relu is max(0, x) with the zero constant first, so relu'(0) = 0.
class Tape {
 public:
  NodeId leaf(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId softmax_rows(NodeId a);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId max_elem(NodeId a, NodeId b);

  NodeId add_scalar(NodeId a, double s);
  NodeId sub_scalar(NodeId a, double s);
  NodeId mul_scalar(NodeId a, double s);
  NodeId div_scalar(NodeId a, double s);
  NodeId max_scalar(NodeId a, double s);

  NodeId relu(NodeId a);
  NodeId square(NodeId a);

  /// Broadcast multiply by a 1x1 node.
  NodeId scale(NodeId a, NodeId c);
  /// Adds a 1xd row vector to every row of an nxd tensor.
  NodeId add_rowvec(NodeId a, NodeId b);

  NodeId sum_all(NodeId a);
  NodeId col_sums(NodeId a);
  NodeId max_all(NodeId a);

  NodeId concat_cols(NodeId a, NodeId b);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Read-only structure access, e.g. for graph diagnostics in tests.
  Op op_at(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].op; }
  std::pair<NodeId, NodeId> parents_of(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return {n.a, n.b};
  }
  double scalar_at(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].scalar; }

  /// Reverse-mode accumulation from a scalar loss node. Throws if the loss
  /// is not 1x1.
  GradientSet backward(NodeId loss) const;

 private:
  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double scalar = 0.0;
    Tensor value;
  };

  NodeId push(Op op, NodeId a, NodeId b, double scalar, Tensor value);
  const Tensor& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  std::vector<Node> nodes_;
};

}  // namespace loop_pe
