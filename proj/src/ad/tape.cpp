#include "planval/ad/tape.hpp"

#include <cmath>

namespace planval::ad {

namespace {

Tape* same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw StateError("ad: use of an invalid Var");
  if (a.tape != b.tape) throw PreconditionError("ad: operands live on different tapes");
  return a.tape;
}

Tape* tape_of(Var a) {
  if (!a.valid()) throw StateError("ad: use of an invalid Var");
  return a.tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string("ad::") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

Matrix softplus_value(const Matrix& x) {
  return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
}

/// Unary elementwise op whose derivative is a function of the input and output values.
template <typename F, typename D>
Var unary(Var a, F f, D d) {
  Tape* t = tape_of(a);
  const int ia = a.id;
  return t->record(
      {ia}, [ia, f](const Tape& tp) { return Matrix(f(tp.value(ia))); },
      [ia, d](Tape& tp, int self, const Matrix& g) {
        if (!tp.requires_grad(ia)) return;
        tp.accumulate(ia, Matrix(g.array() * d(tp.value(ia), tp.value(self)).array()));
      });
}

}  // namespace

const Matrix& Var::value() const {
  if (!valid()) throw StateError("ad: use of an invalid Var");
  return tape->value(id);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("ad::Var::scalar: node is not 1x1");
  return v(0, 0);
}

Var Tape::push(Node node) {
  if (backward_done_) throw StateError("ad::Tape: cannot record after backward; clear the tape first");
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(const ParamStore& store, Index index, bool trainable) {
  const auto key = std::make_pair(&store, index);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) {
    if (it->second.second != trainable)
      throw PreconditionError("ad::Tape::param: entry '" + store.name(index) + "' bound as both trainable and frozen");
    return {this, it->second.first};
  }
  Node n;
  n.value = store.value(index);
  n.requires_grad = trainable;
  const Var v = push(std::move(n));
  param_nodes_.emplace(key, std::make_pair(v.id, trainable));
  return v;
}

Var Tape::record(std::vector<int> parents, Forward forward, Backward backward) {
  Node n;
  n.value = forward(*this);
  for (int p : parents) n.requires_grad = n.requires_grad || requires_grad(p);
  n.forward = std::move(forward);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::accumulate(int id, const Matrix& grad) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (grad.rows() != n.value.rows() || grad.cols() != n.value.cols())
    throw ShapeError("ad::Tape::accumulate: gradient shape does not match node");
  if (n.has_grad) {
    n.grad += grad;
  } else {
    n.grad = grad;
    n.has_grad = true;
  }
}

void Tape::backward(Var output) {
  if (!output.valid() || output.tape != this) throw StateError("ad::Tape::backward: output does not belong to this tape");
  backward(output, Matrix::Ones(value(output.id).rows(), value(output.id).cols()));
}

void Tape::backward(Var output, const Matrix& seed) {
  if (!output.valid() || output.tape != this || output.id >= static_cast<int>(nodes_.size()))
    throw StateError("ad::Tape::backward: no completed forward pass for this output");
  for (auto& n : nodes_) n.has_grad = false;
  backward_done_ = true;
  accumulate(output.id, seed);
  for (int i = output.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  if (!backward_done_) throw StateError("ad::Tape::grad: backward has not run");
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Gradients Tape::gradients(const ParamStore& store) const {
  if (!backward_done_) throw StateError("ad::Tape::gradients: backward has not run");
  Gradients out = zero_gradients(store);
  for (const auto& [key, node] : param_nodes_) {
    if (key.first != &store || !node.second) continue;
    const Node& n = nodes_[static_cast<std::size_t>(node.first)];
    if (n.has_grad) out[static_cast<std::size_t>(key.second)] = n.grad;
  }
  return out;
}

Matrix Tape::replay(Var output) const {
  // leaves keep their recorded values; every other node is recomputed in a scratch tape view
  Tape scratch;
  scratch.nodes_.reserve(static_cast<std::size_t>(output.id + 1));
  for (int i = 0; i <= output.id; ++i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    Node copy;
    copy.value = n.forward ? n.forward(scratch) : n.value;
    scratch.nodes_.push_back(std::move(copy));
  }
  return scratch.nodes_.back().value;
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
  backward_done_ = false;
}

Var matmul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("ad::matmul: inner dimensions " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()));
  const int ia = a.id, ib = b.id;
  return t->record(
      {ia, ib}, [ia, ib](const Tape& tp) { return Matrix(tp.value(ia) * tp.value(ib)); },
      [ia, ib](Tape& tp, int, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g * tp.value(ib).transpose()));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(tp.value(ia).transpose() * g));
      });
}

Var add_row(Var x, Var row) {
  Tape* t = same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) throw ShapeError("ad::add_row: row must be 1 x cols(x)");
  const int ix = x.id, ir = row.id;
  return t->record(
      {ix, ir}, [ix, ir](const Tape& tp) { return Matrix(tp.value(ix).rowwise() + tp.value(ir).row(0)); },
      [ix, ir](Tape& tp, int, const Matrix& g) {
        tp.accumulate(ix, g);
        if (tp.requires_grad(ir)) tp.accumulate(ir, Matrix(g.colwise().sum()));
      });
}

Var operator+(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id, ib = b.id;
  return t->record(
      {ia, ib}, [ia, ib](const Tape& tp) { return Matrix(tp.value(ia) + tp.value(ib)); },
      [ia, ib](Tape& tp, int, const Matrix& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
      });
}

Var operator-(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id, ib = b.id;
  return t->record(
      {ia, ib}, [ia, ib](const Tape& tp) { return Matrix(tp.value(ia) - tp.value(ib)); },
      [ia, ib](Tape& tp, int, const Matrix& g) {
        tp.accumulate(ia, g);
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(-g));
      });
}

Var operator-(Var a) { return -1.0 * a; }

Var operator*(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id, ib = b.id;
  return t->record(
      {ia, ib}, [ia, ib](const Tape& tp) { return Matrix(tp.value(ia).cwiseProduct(tp.value(ib))); },
      [ia, ib](Tape& tp, int, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g.cwiseProduct(tp.value(ib))));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(g.cwiseProduct(tp.value(ia))));
      });
}

Var operator*(double c, Var a) {
  Tape* t = tape_of(a);
  const int ia = a.id;
  return t->record(
      {ia}, [ia, c](const Tape& tp) { return Matrix(c * tp.value(ia)); },
      [ia, c](Tape& tp, int, const Matrix& g) { tp.accumulate(ia, Matrix(c * g)); });
}

Var operator*(Var a, double c) { return c * a; }

Var operator+(Var a, double c) {
  Tape* t = tape_of(a);
  const int ia = a.id;
  return t->record(
      {ia}, [ia, c](const Tape& tp) { return Matrix(tp.value(ia).array() + c); },
      [ia](Tape& tp, int, const Matrix& g) { tp.accumulate(ia, g); });
}

Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-1.0 * a) + c; }

Var scale(Var s, Var m) {
  Tape* t = same_tape(s, m);
  if (s.value().size() != 1) throw ShapeError("ad::scale: first operand must be 1x1");
  const int is = s.id, im = m.id;
  return t->record(
      {is, im}, [is, im](const Tape& tp) { return Matrix(tp.value(is)(0, 0) * tp.value(im)); },
      [is, im](Tape& tp, int, const Matrix& g) {
        if (tp.requires_grad(is)) tp.accumulate(is, Matrix::Constant(1, 1, g.cwiseProduct(tp.value(im)).sum()));
        if (tp.requires_grad(im)) tp.accumulate(im, Matrix(tp.value(is)(0, 0) * g));
      });
}

Var mul_col(Var m, Var col) {
  Tape* t = same_tape(m, col);
  if (col.cols() != 1 || col.rows() != m.rows()) throw ShapeError("ad::mul_col: column must be rows(m) x 1");
  const int im = m.id, ic = col.id;
  return t->record(
      {im, ic},
      [im, ic](const Tape& tp) { return Matrix(tp.value(im).array().colwise() * tp.value(ic).col(0).array()); },
      [im, ic](Tape& tp, int, const Matrix& g) {
        if (tp.requires_grad(im)) tp.accumulate(im, Matrix(g.array().colwise() * tp.value(ic).col(0).array()));
        if (tp.requires_grad(ic)) tp.accumulate(ic, Matrix(g.cwiseProduct(tp.value(im)).rowwise().sum()));
      });
}

Var tanh(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().tanh()); },
      [](const Matrix&, const Matrix& y) { return Matrix(1.0 - y.array().square()); });
}

Var relu(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().max(0.0)); },
      [](const Matrix& x, const Matrix&) { return Matrix((x.array() > 0.0).cast<double>()); });
}

Var silu(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array() * sigmoid(x).array()); },
      [](const Matrix& x, const Matrix&) {
        const Matrix s = sigmoid(x);
        return Matrix(s.array() * (1.0 + x.array() * (1.0 - s.array())));
      });
}

Var exp(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().exp()); },
      [](const Matrix&, const Matrix& y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().log()); },
      [](const Matrix& x, const Matrix&) { return Matrix(x.array().inverse()); });
}

Var square(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().square()); },
      [](const Matrix& x, const Matrix&) { return Matrix(2.0 * x); });
}

Var softplus(Var a) {
  return unary(
      a, [](const Matrix& x) { return softplus_value(x); }, [](const Matrix& x, const Matrix&) { return sigmoid(x); });
}

Var sin(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().sin()); },
      [](const Matrix& x, const Matrix&) { return Matrix(x.array().cos()); });
}

Var cos(Var a) {
  return unary(
      a, [](const Matrix& x) { return Matrix(x.array().cos()); },
      [](const Matrix& x, const Matrix&) { return Matrix(-x.array().sin()); });
}

Var atan2(Var y, Var x) {
  Tape* t = same_tape(y, x);
  require_same_shape(y.value(), x.value(), "atan2");
  const int iy = y.id, ix = x.id;
  return t->record(
      {iy, ix},
      [iy, ix](const Tape& tp) { return Matrix(tp.value(iy).binaryExpr(tp.value(ix), [](double a, double b) { return std::atan2(a, b); })); },
      [iy, ix](Tape& tp, int, const Matrix& g) {
        const auto& yv = tp.value(iy).array();
        const auto& xv = tp.value(ix).array();
        const Eigen::ArrayXXd r2 = xv.square() + yv.square();
        if (tp.requires_grad(iy)) tp.accumulate(iy, Matrix(g.array() * xv / r2));
        if (tp.requires_grad(ix)) tp.accumulate(ix, Matrix(-g.array() * yv / r2));
      });
}

Var minimum(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "minimum");
  const int ia = a.id, ib = b.id;
  return t->record(
      {ia, ib}, [ia, ib](const Tape& tp) { return Matrix(tp.value(ia).cwiseMin(tp.value(ib))); },
      [ia, ib](Tape& tp, int, const Matrix& g) {
        const Eigen::ArrayXXd take_a = (tp.value(ia).array() <= tp.value(ib).array()).cast<double>();
        if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g.array() * take_a));
        if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(g.array() * (1.0 - take_a)));
      });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](const Matrix& x) { return Matrix(x.array().max(lo).min(hi)); },
      [lo, hi](const Matrix& x, const Matrix&) {
        return Matrix(((x.array() >= lo) && (x.array() <= hi)).cast<double>());
      });
}

Var soft_upper(Var a, Var hi) { return add_row(-softplus(add_row(-a, hi)), hi); }

Var soft_lower(Var a, Var lo) { return add_row(softplus(add_row(a, -lo)), lo); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("ad::concat_cols: no parts");
  Tape* t = tape_of(parts[0]);
  std::vector<int> ids;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != parts[0].rows()) throw ShapeError("ad::concat_cols: row counts differ");
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  return t->record(
      ids,
      [ids, widths](const Tape& tp) {
        Index total = 0;
        for (Index w : widths) total += w;
        Matrix out(tp.value(ids[0]).rows(), total);
        Index c = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          out.middleCols(c, widths[i]) = tp.value(ids[i]);
          c += widths[i];
        }
        return out;
      },
      [ids, widths](Tape& tp, int, const Matrix& g) {
        Index c = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (tp.requires_grad(ids[i])) tp.accumulate(ids[i], Matrix(g.middleCols(c, widths[i])));
          c += widths[i];
        }
      });
}

Var slice_cols(Var a, Index start, Index count) {
  Tape* t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("ad::slice_cols: range out of bounds");
  const int ia = a.id;
  return t->record(
      {ia}, [ia, start, count](const Tape& tp) { return Matrix(tp.value(ia).middleCols(start, count)); },
      [ia, start, count](Tape& tp, int, const Matrix& g) {
        Matrix full = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
        full.middleCols(start, count) = g;
        tp.accumulate(ia, full);
      });
}

Var gather_rows(Var a, std::span<const Index> rows) {
  Tape* t = tape_of(a);
  std::vector<Index> idx(rows.begin(), rows.end());
  for (Index r : idx)
    if (r < 0 || r >= a.rows()) throw ShapeError("ad::gather_rows: row index out of range");
  const int ia = a.id;
  return t->record(
      {ia}, [ia, idx](const Tape& tp) { return Matrix(tp.value(ia)(idx, Eigen::all)); },
      [ia, idx](Tape& tp, int, const Matrix& g) {
        Matrix full = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
        for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Index>(i));
        tp.accumulate(ia, full);
      });
}

Var assemble_rows(std::span<const Var> parts, std::span<const std::vector<Index>> rows, Index n) {
  if (parts.empty() || parts.size() != rows.size()) throw ShapeError("ad::assemble_rows: parts and row lists differ");
  Tape* t = tape_of(parts[0]);
  std::vector<int> ids;
  std::vector<std::vector<Index>> where(rows.begin(), rows.end());
  const Index cols = parts[0].cols();
  for (std::size_t p = 0; p < parts.size(); ++p) {
    same_tape(parts[0], parts[p]);
    if (parts[p].cols() != cols || parts[p].rows() != static_cast<Index>(where[p].size()))
      throw ShapeError("ad::assemble_rows: part shape does not match its row list");
    ids.push_back(parts[p].id);
  }
  return t->record(
      ids,
      [ids, where, n, cols](const Tape& tp) {
        Matrix out = Matrix::Zero(n, cols);
        for (std::size_t p = 0; p < ids.size(); ++p)
          for (std::size_t i = 0; i < where[p].size(); ++i) out.row(where[p][i]) = tp.value(ids[p]).row(static_cast<Index>(i));
        return out;
      },
      [ids, where](Tape& tp, int, const Matrix& g) {
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!tp.requires_grad(ids[p])) continue;
          tp.accumulate(ids[p], Matrix(g(where[p], Eigen::all)));
        }
      });
}

Var sum(Var a) {
  Tape* t = tape_of(a);
  const int ia = a.id;
  return t->record(
      {ia}, [ia](const Tape& tp) { return Matrix::Constant(1, 1, tp.value(ia).sum()); },
      [ia](Tape& tp, int, const Matrix& g) {
        tp.accumulate(ia, Matrix::Constant(tp.value(ia).rows(), tp.value(ia).cols(), g(0, 0)));
      });
}

Var mean(Var a) {
  Tape* t = tape_of(a);
  const int ia = a.id;
  return t->record(
      {ia}, [ia](const Tape& tp) { return Matrix::Constant(1, 1, tp.value(ia).mean()); },
      [ia](Tape& tp, int, const Matrix& g) {
        const auto& v = tp.value(ia);
        tp.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), g(0, 0) / static_cast<double>(v.size())));
      });
}

Var row_sum(Var a) {
  Tape* t = tape_of(a);
  const int ia = a.id;
  return t->record(
      {ia}, [ia](const Tape& tp) { return Matrix(tp.value(ia).rowwise().sum()); },
      [ia](Tape& tp, int, const Matrix& g) {
        tp.accumulate(ia, Matrix(g.col(0).replicate(1, tp.value(ia).cols())));
      });
}

Var detach(Var a) { return tape_of(a)->constant(a.value()); }

}  // namespace planval::ad
