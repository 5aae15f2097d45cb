#include "loop_pe/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace loop_pe {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": invalid shape " + a.shape_str());
}

}  // namespace

NodeId Tape::push(Op op, NodeId a, NodeId b, double scalar, Tensor value) {
  nodes_.push_back(Node{op, a, b, scalar, std::move(value)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value) { return push(Op::Leaf, -1, -1, 0.0, std::move(value)); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out(m, n);
  // i,p,j loop order: for each output entry the sum over p runs ascending.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  }
  return push(Op::MatMul, a, b, 0.0, std::move(out));
}

NodeId Tape::transpose(NodeId a) {
  const Tensor& A = val(a);
  Tensor out(A.cols(), A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
  return push(Op::Transpose, a, -1, 0.0, std::move(out));
}

NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& A = val(a);
  if (!A.all_finite()) throw std::domain_error("softmax_rows: non-finite input");
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < A.cols(); ++j) m = std::max(m, A.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < A.cols(); ++j) {
      out.at(i, j) = std::exp(A.at(i, j) - m);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < A.cols(); ++j) out.at(i, j) /= z;
  }
  return push(Op::SoftmaxRows, a, -1, 0.0, std::move(out));
}

#define LOOP_PE_BINARY(NAME, OP_TAG, EXPR, CHECK)                        \
  NodeId Tape::NAME(NodeId a, NodeId b) {                                \
    const Tensor& A = val(a);                                            \
    const Tensor& B = val(b);                                            \
    if (!A.same_shape(B)) shape_error(#NAME, A, B);                      \
    Tensor out(A.rows(), A.cols());                                      \
    for (std::size_t i = 0; i < A.size(); ++i) {                         \
      const double x = A[i], y = B[i];                                   \
      CHECK;                                                             \
      out[i] = EXPR;                                                     \
    }                                                                    \
    return push(Op::OP_TAG, a, b, 0.0, std::move(out));                  \
  }

LOOP_PE_BINARY(add, Add, x + y, (void)0)
LOOP_PE_BINARY(sub, Sub, x - y, (void)0)
LOOP_PE_BINARY(mul, Mul, x * y, (void)0)
LOOP_PE_BINARY(div, Div, x / y,
               if (y == 0.0) throw std::domain_error("div: division by zero"))
LOOP_PE_BINARY(max_elem, MaxElem, (x >= y ? x : y), (void)0)
#undef LOOP_PE_BINARY

#define LOOP_PE_SCALAR(NAME, OP_TAG, EXPR, CHECK)                        \
  NodeId Tape::NAME(NodeId a, double s) {                                \
    CHECK;                                                               \
    const Tensor& A = val(a);                                            \
    Tensor out(A.rows(), A.cols());                                      \
    for (std::size_t i = 0; i < A.size(); ++i) {                         \
      const double x = A[i];                                             \
      out[i] = EXPR;                                                     \
    }                                                                    \
    return push(Op::OP_TAG, a, -1, s, std::move(out));                   \
  }

LOOP_PE_SCALAR(add_scalar, AddScalar, x + s, (void)0)
LOOP_PE_SCALAR(sub_scalar, SubScalar, x - s, (void)0)
LOOP_PE_SCALAR(mul_scalar, MulScalar, x * s, (void)0)
LOOP_PE_SCALAR(div_scalar, DivScalar, x / s,
               if (s == 0.0) throw std::domain_error("div_scalar: division by zero"))
LOOP_PE_SCALAR(max_scalar, MaxScalar, (x >= s ? x : s), (void)0)
#undef LOOP_PE_SCALAR

NodeId Tape::relu(NodeId a) {
  const Tensor& A = val(a);
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  return push(Op::Relu, a, -1, 0.0, std::move(out));
}

NodeId Tape::square(NodeId a) {
  const Tensor& A = val(a);
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * A[i];
  return push(Op::Square, a, -1, 0.0, std::move(out));
}

NodeId Tape::scale(NodeId a, NodeId c) {
  const Tensor& A = val(a);
  const Tensor& C = val(c);
  if (C.size() != 1) shape_error("scale: scaling node must be 1x1", C);
  Tensor out(A.rows(), A.cols());
  const double s = C[0];
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * s;
  return push(Op::Scale, a, c, 0.0, std::move(out));
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (B.rows() != 1 || B.cols() != A.cols()) shape_error("add_rowvec", A, B);
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j) + B.at(0, j);
  return push(Op::AddRowVec, a, b, 0.0, std::move(out));
}

NodeId Tape::sum_all(NodeId a) {
  const Tensor& A = val(a);
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  return push(Op::SumAll, a, -1, 0.0, Tensor::scalar(s));
}

NodeId Tape::col_sums(NodeId a) {
  const Tensor& A = val(a);
  Tensor out(1, A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) out.at(0, j) += A.at(i, j);
  return push(Op::ColSums, a, -1, 0.0, std::move(out));
}

NodeId Tape::max_all(NodeId a) {
  const Tensor& A = val(a);
  if (A.empty()) shape_error("max_all: empty input", A);
  double m = A[0];
  for (std::size_t i = 1; i < A.size(); ++i)
    if (A[i] > m) m = A[i];
  return push(Op::MaxAll, a, -1, 0.0, Tensor::scalar(m));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rows() != B.rows()) shape_error("concat_cols", A, B);
  Tensor out(A.rows(), A.cols() + B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j);
    for (std::size_t j = 0; j < B.cols(); ++j) out.at(i, A.cols() + j) = B.at(i, j);
  }
  return push(Op::ConcatCols, a, b, 0.0, std::move(out));
}

GradientSet Tape::backward(NodeId loss) const {
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
    throw std::invalid_argument("backward: loss node out of range");
  if (val(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                val(loss).shape_str());

  std::vector<Tensor> g(nodes_.size());
  std::vector<char> touched(nodes_.size(), 0);
  auto grad_of = [&](NodeId id) -> Tensor& {
    auto idx = static_cast<std::size_t>(id);
    if (!touched[idx]) {
      g[idx] = Tensor(nodes_[idx].value.rows(), nodes_[idx].value.cols());
      touched[idx] = 1;
    }
    return g[idx];
  };

  grad_of(loss)[0] = 1.0;

  // Appended order is topological, so a descending index sweep is a valid
  // reverse order.
  for (NodeId id = loss; id >= 0; --id) {
    const auto idx = static_cast<std::size_t>(id);
    if (!touched[idx]) continue;
    const Node& node = nodes_[idx];
    const Tensor& G = g[idx];
    switch (node.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += G.at(i, j) * B.at(p, j);
            dA.at(i, p) += acc;
          }
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t i = 0; i < m; ++i) {
            const double aip = A.at(i, p);
            for (std::size_t j = 0; j < n; ++j) dB.at(p, j) += aip * G.at(i, j);
          }
        break;
      }
      case Op::Transpose: {
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.rows(); ++i)
          for (std::size_t j = 0; j < G.cols(); ++j) dA.at(j, i) += G.at(i, j);
        break;
      }
      case Op::SoftmaxRows: {
        const Tensor& S = node.value;
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < S.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < S.cols(); ++j) dot += G.at(i, j) * S.at(i, j);
          for (std::size_t j = 0; j < S.cols(); ++j)
            dA.at(i, j) += S.at(i, j) * (G.at(i, j) - dot);
        }
        break;
      }
      case Op::Add: {
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA[i] += G[i];
          dB[i] += G[i];
        }
        break;
      }
      case Op::Sub: {
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA[i] += G[i];
          dB[i] -= G[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA[i] += G[i] * B[i];
          dB[i] += G[i] * A[i];
        }
        break;
      }
      case Op::Div: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA[i] += G[i] / B[i];
          dB[i] -= G[i] * A[i] / (B[i] * B[i]);
        }
        break;
      }
      case Op::MaxElem: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          if (A[i] >= B[i])
            dA[i] += G[i];
          else
            dB[i] += G[i];
        }
        break;
      }
      case Op::AddScalar:
      case Op::SubScalar: {
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i];
        break;
      }
      case Op::MulScalar: {
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * node.scalar;
        break;
      }
      case Op::DivScalar: {
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] / node.scalar;
        break;
      }
      case Op::MaxScalar: {
        const Tensor& A = val(node.a);
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.size(); ++i)
          if (A[i] >= node.scalar) dA[i] += G[i];
        break;
      }
      case Op::Relu: {
        const Tensor& A = val(node.a);
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.size(); ++i)
          if (A[i] > 0.0) dA[i] += G[i];
        break;
      }
      case Op::Square: {
        const Tensor& A = val(node.a);
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += 2.0 * A[i] * G[i];
        break;
      }
      case Op::Scale: {
        const Tensor& A = val(node.a);
        const double s = val(node.b)[0];
        Tensor& dA = grad_of(node.a);
        Tensor& dC = grad_of(node.b);
        double acc = 0.0;
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA[i] += G[i] * s;
          acc += G[i] * A[i];
        }
        dC[0] += acc;
        break;
      }
      case Op::AddRowVec: {
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.rows(); ++i)
          for (std::size_t j = 0; j < G.cols(); ++j) {
            dA.at(i, j) += G.at(i, j);
            dB.at(0, j) += G.at(i, j);
          }
        break;
      }
      case Op::SumAll: {
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += G[0];
        break;
      }
      case Op::ColSums: {
        Tensor& dA = grad_of(node.a);
        for (std::size_t i = 0; i < dA.rows(); ++i)
          for (std::size_t j = 0; j < dA.cols(); ++j) dA.at(i, j) += G.at(0, j);
        break;
      }
      case Op::MaxAll: {
        const Tensor& A = val(node.a);
        Tensor& dA = grad_of(node.a);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < A.size(); ++i)
          if (A[i] > A[arg]) arg = i;
        dA[arg] += G[0];
        break;
      }
      case Op::ConcatCols: {
        Tensor& dA = grad_of(node.a);
        Tensor& dB = grad_of(node.b);
        for (std::size_t i = 0; i < G.rows(); ++i) {
          for (std::size_t j = 0; j < dA.cols(); ++j) dA.at(i, j) += G.at(i, j);
          for (std::size_t j = 0; j < dB.cols(); ++j)
            dB.at(i, j) += G.at(i, dA.cols() + j);
        }
        break;
      }
    }
  }

  // Untouched nodes get zero gradients of the right shape.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!touched[i]) g[i] = Tensor(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  return GradientSet(std::move(g));
}

}  // namespace loop_pe
