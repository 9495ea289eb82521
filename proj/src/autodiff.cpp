#include "garnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace garnn {

const Tensor& Var::value() const { return tape->value(*this); }

std::size_t RowSupport::nonzeros() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

bool RowSupport::contains(std::size_t i, std::size_t j) const {
  const auto& r = rows[i];
  return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(j));
}

RowSupport RowSupport::from_mask(const std::vector<std::vector<bool>>& mask) {
  RowSupport s;
  s.rows.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    for (std::size_t j = 0; j < mask[i].size(); ++j)
      if (mask[i][j]) s.rows[i].push_back(static_cast<std::uint32_t>(j));
  return s;
}

RowSupport RowSupport::dense(std::size_t n) {
  RowSupport s;
  s.rows.resize(n);
  for (auto& r : s.rows)
    for (std::size_t j = 0; j < n; ++j) r.push_back(static_cast<std::uint32_t>(j));
  return s;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& storage) {
  Node n;
  n.external = &storage;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant_view(const Tensor& storage) {
  Node n;
  n.external = &storage;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape != this) throw ContractError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor(value(v).shape());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_[v.id].requires_grad) return;
  axpy(grad_buffer(v), 1.0, g);
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss recorded on a different tape");
  if (value(loss).size() != 1)
    throw ContractError("backward: loss must be a scalar, got " + shape_string(value(loss).shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Closures write only into their parents, which precede this node.
    Tensor grad = std::move(n.grad);
    n.backward(*this, grad);
    n.grad = std::move(grad);
  }
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(value(v).shape());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Scalar helpers

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double leaky_relu(double x, double slope) { return x > 0 ? x : slope * x; }

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = x;
  for (double& v : out.values()) v = leaky_relu(v, slope);
  return out;
}

Tensor masked_row_softmax(const Tensor& scores, const RowSupport& support) {
  require_matrix(scores, "masked_row_softmax");
  const std::size_t n = scores.rows();
  if (support.size() != n) throw DimensionError("masked_row_softmax", scores.shape(), {support.size()});
  Tensor out(scores.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = support.rows[i];
    if (row.empty()) throw IsolatedVertexError("masked_row_softmax: row " + std::to_string(i) + " has empty support");
    double m = -std::numeric_limits<double>::infinity();
    for (auto j : row) m = std::max(m, scores(i, j));
    double z = 0.0;
    for (auto j : row) {
      const double e = std::exp(scores(i, j) - m);
      out(i, j) = e;
      z += e;
    }
    for (auto j : row) out(i, j) /= z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operation suite

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(garnn::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, matmul_bt(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, matmul_at(t.value(a), g));
  });
}

Var matmul_bt(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(garnn::matmul_bt(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, garnn::matmul(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, matmul_at(g, t.value(a)));
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(garnn::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(garnn::sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) axpy(t.grad_buffer(b), -1.0, g);
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(garnn::hadamard(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, garnn::hadamard(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, garnn::hadamard(g, t.value(a)));
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double alpha, double beta) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.values()) v = alpha * v + beta;
  return t.record(std::move(out), {a}, [a, alpha](Tape& t, const Tensor& g) { axpy(t.grad_buffer(a), alpha, g); });
}

Var add_row(Var a, Var row) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_matrix(av, "add_row");
  require_matrix(rv, "add_row");
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw DimensionError("add_row", av.shape(), rv.shape());
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) {
      Tensor& gr = t.grad_buffer(row);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& t = *parts[0].tape;
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols", parts[0].shape(), p.shape());
    cols += p.value().cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.data() + i * v.cols(), v.cols(), out.data() + i * cols + offset);
    offset += v.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [owned](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : owned) {
      const std::size_t c = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, offset + j);
      }
      offset += c;
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) { return concat_cols(std::span<const Var>(parts.begin(), parts.size())); }

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& v = a.value();
  require_matrix(v, "slice_rows");
  if (begin + count > v.rows()) throw DimensionError("slice_rows", v.shape(), {begin, count});
  Tensor out = Tensor::matrix(count, v.cols());
  std::copy_n(v.data() + begin * v.cols(), count * v.cols(), out.data());
  return a.tape->record(std::move(out), {a}, [a, begin](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const std::size_t c = g.cols();
    for (std::size_t k = 0; k < g.size(); ++k) ga[begin * c + k] += g[k];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& v = a.value();
  require_matrix(v, "slice_cols");
  if (begin + count > v.cols()) throw DimensionError("slice_cols", v.shape(), {begin, count});
  Tensor out = Tensor::matrix(v.rows(), count);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = v(i, begin + j);
  return a.tape->record(std::move(out), {a}, [a, begin](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, begin + j) += g(i, j);
  });
}

namespace {
// Id the next recorded node will receive; lets a closure refer to its own output.
Var next_var(Tape& t) { return Var{&t, static_cast<std::uint32_t>(t.size())}; }
}  // namespace

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = sigmoid(v);
  Var y = next_var(*a.tape);
  return a.tape->record(std::move(out), {a}, [a, y](Tape& t, const Tensor& g) {
    const Tensor& s = t.value(y);
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  Var y = next_var(*a.tape);
  return a.tape->record(std::move(out), {a}, [a, y](Tape& t, const Tensor& g) {
    const Tensor& h = t.value(y);
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - h[i] * h[i]);
  });
}

Var leaky_relu(Var a, double slope) {
  return a.tape->record(leaky_relu(a.value(), slope), {a}, [a, slope](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(a);
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > 0 ? 1.0 : slope);
  });
}

Var pairwise_sum(Var col_a, Var col_b) {
  const Tensor& a = col_a.value();
  const Tensor& b = col_b.value();
  require_matrix(a, "pairwise_sum");
  require_matrix(b, "pairwise_sum");
  if (a.cols() != 1 || b.cols() != 1) throw DimensionError("pairwise_sum", a.shape(), b.shape());
  Tensor out = Tensor::matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = a[i] + b[j];
  return col_a.tape->record(std::move(out), {col_a, col_b}, [col_a, col_b](Tape& t, const Tensor& g) {
    if (t.requires_grad(col_a)) {
      Tensor& ga = t.grad_buffer(col_a);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga[i] += g(i, j);
    }
    if (t.requires_grad(col_b)) {
      Tensor& gb = t.grad_buffer(col_b);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

Var masked_row_softmax(Var scores, const RowSupport& support) {
  Tape& tape = *scores.tape;
  Var out = next_var(tape);
  // Supports are owned by long-lived graph objects that outlive the tape.
  const RowSupport* sup = &support;
  return tape.record(masked_row_softmax(scores.value(), support), {scores}, [scores, out, sup](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(out);
    Tensor& gs = t.grad_buffer(scores);
    for (std::size_t i = 0; i < sup->size(); ++i) {
      double dot = 0.0;
      for (auto j : sup->rows[i]) dot += yv(i, j) * g(i, j);
      for (auto j : sup->rows[i]) gs(i, j) += yv(i, j) * (g(i, j) - dot);
    }
  });
}

Var support_matmul(Var a, const RowSupport& support, Var x) {
  const Tensor& av = a.value();
  const Tensor& xv = x.value();
  require_matrix(av, "support_matmul");
  require_matrix(xv, "support_matmul");
  const std::size_t n = av.rows();
  if (av.cols() != xv.rows() || support.size() != n) throw DimensionError("support_matmul", av.shape(), xv.shape());
  const std::size_t c = xv.cols();
  Tensor out = Tensor::matrix(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * c;
    for (auto j : support.rows[i]) {
      const double w = av(i, j);
      const double* xrow = xv.data() + j * c;
      for (std::size_t k = 0; k < c; ++k) orow[k] += w * xrow[k];
    }
  }
  const RowSupport* sup = &support;
  return a.tape->record(std::move(out), {a, x}, [a, x, sup](Tape& t, const Tensor& g) {
    const std::size_t c = g.cols();
    if (t.requires_grad(a)) {
      const Tensor& xv = t.value(x);
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < sup->size(); ++i) {
        const double* grow = g.data() + i * c;
        for (auto j : sup->rows[i]) {
          const double* xrow = xv.data() + j * c;
          double s = 0.0;
          for (std::size_t k = 0; k < c; ++k) s += grow[k] * xrow[k];
          ga(i, j) += s;
        }
      }
    }
    if (t.requires_grad(x)) {
      const Tensor& av = t.value(a);
      Tensor& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < sup->size(); ++i) {
        const double* grow = g.data() + i * c;
        for (auto j : sup->rows[i]) {
          const double w = av(i, j);
          double* xrow = gx.data() + j * c;
          for (std::size_t k = 0; k < c; ++k) xrow[k] += w * grow[k];
        }
      }
    }
  });
}

Var gather(Var a, std::vector<std::size_t> indices, Shape shape) {
  const Tensor& v = a.value();
  std::vector<double> values(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= v.size()) throw DimensionError("gather: index out of range for " + shape_string(v.shape()));
    values[i] = v[indices[i]];
  }
  Tensor out(std::move(shape), std::move(values));
  return a.tape->record(std::move(out), {a}, [a, idx = std::move(indices)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[i];
  });
}

Var mean_of(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("mean_of: no operands");
  if (parts.size() == 1) return parts[0];
  Tensor out(parts[0].shape());
  for (const Var& p : parts) {
    if (!p.value().same_shape(out)) throw DimensionError("mean_of", parts[0].shape(), p.shape());
    axpy(out, 1.0, p.value());
  }
  const double w = 1.0 / static_cast<double>(parts.size());
  for (double& v : out.values()) v *= w;
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), parts, [owned, w](Tape& t, const Tensor& g) {
    for (const Var& p : owned)
      if (t.requires_grad(p)) axpy(t.grad_buffer(p), w, g);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const double gv = g[0];
    for (double& v : ga.values()) v += gv;
  });
}

Var masked_abs_error_sum(Var a, const Tensor& target, const Tensor& mask) {
  const Tensor& v = a.value();
  if (!v.same_shape(target)) throw DimensionError("masked_abs_error_sum", v.shape(), target.shape());
  if (!v.same_shape(mask)) throw DimensionError("masked_abs_error_sum", v.shape(), mask.shape());
  double s = 0.0;
  std::vector<double> sign(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double e = v[i] - target[i];
    s += std::abs(e);
    sign[i] = e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0);
  }
  return a.tape->record(Tensor::scalar(s), {a}, [a, sign = std::move(sign)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < sign.size(); ++i) ga[i] += g[0] * sign[i];
  });
}

Var stop_gradient(Var a) { return a.tape->constant(a.value()); }

}  // namespace garnn
