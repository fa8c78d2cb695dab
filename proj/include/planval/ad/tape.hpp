#pragma once

#include "planval/ad/params.hpp"

#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace planval::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Scalar value of a 1x1 node.
  double scalar() const;
};

/// Linear record of primitive operations over dense matrices (rows are batch entries).
/// Nodes that cannot reach a trainable leaf carry no backward work.
class Tape {
 public:
  using Forward = std::function<Matrix(const Tape&)>;
  using Backward = std::function<void(Tape&, int self, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf that collects a gradient (used for gradients with respect to inputs).
  Var variable(Matrix value);
  /// Leaf bound to store entry `index`. Repeated calls return the same node.
  /// A frozen parameter passes no gradient to the store but still lets gradients flow to other inputs.
  Var param(const ParamStore& store, Index index, bool trainable = true);
  Var param(const ParamStore& store, std::string_view name, bool trainable = true) {
    return param(store, store.index_of(name), trainable);
  }

  /// Records a node computed by `forward` from `parents`. `backward` receives the node's
  /// own id and gradient and must accumulate into parents via `accumulate`.
  Var record(std::vector<int> parents, Forward forward, Backward backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  void accumulate(int id, const Matrix& grad);
  template <typename Expr>
  void accumulate(int id, const Eigen::MatrixBase<Expr>& grad) {
    accumulate(id, Matrix(grad));
  }

  /// Reverse sweep from `output` seeded with `seed` (default: ones of the output's shape).
  void backward(Var output);
  void backward(Var output, const Matrix& seed);

  bool has_gradients() const { return backward_done_; }
  /// Gradient of a node after backward; zeros if the node was never reached.
  Matrix grad(Var v) const;
  /// Gradients for every entry of `store` that was bound as a trainable param; zeros elsewhere.
  Gradients gradients(const ParamStore& store) const;

  /// Recomputes every node's value from its forward rule and returns the value of `output`.
  Matrix replay(Var output) const;

  Index size() const { return static_cast<Index>(nodes_.size()); }
  void clear();

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    Forward forward;
    Backward backward;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore*, Index>, std::pair<int, bool>> param_nodes_;
  bool backward_done_ = false;
};

// Primitive operations. Shapes follow Eigen semantics; mismatches raise ShapeError.

Var matmul(Var a, Var b);
/// x (n x m) plus a 1 x m row broadcast over rows.
Var add_row(Var x, Var row);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
/// Elementwise product.
Var operator*(Var a, Var b);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
/// A 1x1 node times a matrix node.
Var scale(Var scalar, Var m);
/// Column vector (n x 1) broadcast across the columns of m (n x c).
Var mul_col(Var m, Var col);

Var tanh(Var a);
Var relu(Var a);
Var silu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);
Var sin(Var a);
Var cos(Var a);
Var atan2(Var y, Var x);
Var minimum(Var a, Var b);
/// Hard clamp; the gradient is zero where the bound is active.
Var clamp(Var a, double lo, double hi);
/// Smooth clamp from above, hi - softplus(hi - a), with `hi` a 1 x m row broadcast over rows.
Var soft_upper(Var a, Var hi);
/// Smooth clamp from below, lo + softplus(a - lo), with `lo` a 1 x m row.
Var soft_lower(Var a, Var lo);

Var concat_cols(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice_cols(Var a, Index start, Index count);
Var gather_rows(Var a, std::span<const Index> rows);
/// Inverse of a partition into gather_rows: part p supplies rows `rows[p]` of an n-row result.
Var assemble_rows(std::span<const Var> parts, std::span<const std::vector<Index>> rows, Index n);

/// Sum of all entries (1x1).
Var sum(Var a);
/// Mean of all entries (1x1).
Var mean(Var a);
/// Per-row sums (n x 1).
Var row_sum(Var a);
/// Copy without gradient flow.
Var detach(Var a);

}  // namespace planval::ad
