// Tape-based reverse-mode differentiation over whole tensors.
//
// Every differentiable operation appends one node to a Tape holding its value
// and a closure that pushes the node's gradient into its parents. backward()
// replays the closures in exact reverse order of recording. A tape belongs to
// one thread; parameter leaves only read the storage they reference, so many
// tapes may bind the same parameters concurrently.
//
//   Tape tape;
//   Var p = tape.variable(Tensor::scalar(3.0));
//   Var loss = hadamard(p, p);
//   tape.backward(loss);
//   tape.gradient(p).item();  // 6

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "garnn/tensor.hpp"

namespace garnn {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Raised when an operation's preconditions on its arguments do not hold.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A softmax row with no support entries. Cannot happen for graphs built with
/// self-loops; signals a corrupted support.
class IsolatedVertexError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Column indices of the nonzero pattern, one ascending list per row.
struct RowSupport {
  std::vector<std::vector<std::uint32_t>> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t nonzeros() const;
  bool contains(std::size_t i, std::size_t j) const;

  static RowSupport from_mask(const std::vector<std::vector<bool>>& mask);
  static RowSupport dense(std::size_t n);
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient and owns its value.
  Var variable(Tensor value);
  /// Leaf that receives a gradient and reads external storage, which must
  /// outlive the tape and stay unchanged while it is in use.
  Var parameter(const Tensor& storage);
  /// Leaf reading external storage that never receives a gradient.
  Var constant_view(const Tensor& storage);

  /// Appends an interior node. The closure is dropped when no parent
  /// requires a gradient.
  Var record(Tensor value, std::span<const Var> parents, Backward backward);
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad_buffer(Var v);
  void accumulate(Var v, const Tensor& g);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape backwards.
  void backward(Var loss);

  /// Gradient reached at v after backward(); zeros when nothing reached it.
  Tensor gradient(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Differentiable operation suite. Shapes are validated eagerly and reported
// through DimensionError naming both operands.
Var matmul(Var a, Var b);
Var matmul_bt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// alpha * a + beta, elementwise.
Var affine(Var a, double alpha, double beta);
/// Adds a 1xC row to every row of an RxC matrix.
Var add_row(Var a, Var row);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var sigmoid(Var a);
Var tanh(Var a);
/// x for x > 0, slope * x for x <= 0. The derivative at 0 is slope.
Var leaky_relu(Var a, double slope);
/// out(i, j) = col_a(i) + col_b(j) for two Nx1 columns.
Var pairwise_sum(Var col_a, Var col_b);
/// Row softmax restricted to the support; exactly zero elsewhere.
Var masked_row_softmax(Var scores, const RowSupport& support);
/// A * X where A is zero outside the support; costs O(nnz * cols).
Var support_matmul(Var a, const RowSupport& support, Var x);
/// Rearranges values: out[i] = a[indices[i]].
Var gather(Var a, std::vector<std::size_t> indices, Shape shape);
/// Mean of equally shaped operands.
Var mean_of(std::span<const Var> parts);
Var sum(Var a);
/// Sum over entries with mask != 0 of |a - target|; target and mask are constants.
Var masked_abs_error_sum(Var a, const Tensor& target, const Tensor& mask);
/// Same value, no gradient flows through.
Var stop_gradient(Var a);

// Plain-tensor counterparts used outside the tape.
double sigmoid(double x);
double leaky_relu(double x, double slope);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor masked_row_softmax(const Tensor& scores, const RowSupport& support);

}  // namespace garnn
