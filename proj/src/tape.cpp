#include "capgan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capgan/error.hpp"

namespace capgan {

Tape::Var Tape::push(Tensor value, bool rg, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, rg, rg ? std::move(back) : nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("Tape: invalid variable handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  return const_cast<Tape*>(this)->node(v);
}

Tape::Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::val(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) throw ContractError("Tape::grad: node does not require grad");
  if (n.grad.data.empty() && n.value.size() > 0)
    throw ContractError("Tape::grad: backward() has not run");
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  if (!val(a).same_shape(val(b)))
    throw ShapeError(std::string(op) + ": shape mismatch " + val(a).shape_str() +
                     " vs " + val(b).shape_str());
}

void Tape::acc(int id, const double* g, std::size_t n) {
  Node& nd = nodes_[static_cast<std::size_t>(id)];
  if (!nd.requires_grad) return;
  for (std::size_t i = 0; i < n; ++i) nd.grad.data[i] += g[i];
}

// ---------------------------------------------------------------------------

Tape::Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = val(a);
  const Tensor& bv = val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    t.acc(ia, g.data.data(), g.size());
    t.acc(ib, g.data.data(), g.size());
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = val(a);
  const Tensor& bv = val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    t.acc(ia, g.data.data(), g.size());
    Node& nb = t.nodes_[ib];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) nb.grad.data[i] -= g.data[i];
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = val(a);
  const Tensor& bv = val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.nodes_[ia].value;
    const Tensor& bv2 = t.nodes_[ib].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) na.grad.data[i] += g.data[i] * bv2.data[i];
    Node& nb = t.nodes_[ib];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) nb.grad.data[i] += g.data[i] * av.data[i];
  });
}

Tape::Var Tape::scale(Var a, double s) {
  Tensor out = val(a);
  for (double& v : out.data) v *= s;
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, s, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) na.grad.data[i] += s * g.data[i];
  });
}

Tape::Var Tape::add_const(Var a, const Tensor& c) {
  if (!val(a).same_shape(c))
    throw ShapeError("add_const: shape mismatch " + val(a).shape_str() + " vs " + c.shape_str());
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += c.data[i];
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    t.acc(ia, g.data.data(), g.size());
  });
}

Tape::Var Tape::tanh_(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::tanh(v);
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i)
        na.grad.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Tape::Var Tape::sigmoid_(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i)
        na.grad.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Tape::Var Tape::exp_(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::exp(v);
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) na.grad.data[i] += g.data[i] * y.data[i];
  });
}

Tape::Var Tape::abs_(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::fabs(v);
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.nodes_[ia].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) {
        double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
        na.grad.data[i] += g.data[i] * s;
      }
  });
}

Tape::Var Tape::sqrt_(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) {
    if (v < 0.0) throw NumericError("sqrt_: negative input");
    v = std::sqrt(v);
  }
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (y.data[i] > 0.0) na.grad.data[i] += g.data[i] * 0.5 / y.data[i];
  });
}

Tape::Var Tape::log_clamped(Var a, double eps) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::log(std::max(v, eps));
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, eps, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.nodes_[ia].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x.data[i] >= eps) na.grad.data[i] += g.data[i] / x.data[i];
  });
}

Tape::Var Tape::clamp_(Var a, double lo, double hi) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::min(std::max(v, lo), hi);
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, lo, hi, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.nodes_[ia].value;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x.data[i] > lo && x.data[i] < hi) na.grad.data[i] += g.data[i];
  });
}

// ---------------------------------------------------------------------------

Tape::Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  std::size_t m = av.rows(), k = av.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: inner axis mismatch, lhs cols " + std::to_string(k) +
                     " vs rhs rows " + std::to_string(bv.rows()));
  std::size_t n = bv.cols();
  Tensor out({m, n});
  gemm(false, false, m, n, k, av.data.data(), bv.data.data(), out.data.data(), true);
  bool rg = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ia, ib, m, n, k, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    Node& nb = t.nodes_[ib];
    if (na.requires_grad)  // dA = dC * B^T
      gemm(false, true, m, k, n, g.data.data(), t.nodes_[ib].value.data.data(),
           na.grad.data.data(), true);
    if (nb.requires_grad)  // dB = A^T * dC
      gemm(true, false, k, n, m, t.nodes_[ia].value.data.data(), g.data.data(),
           nb.grad.data.data(), true);
  });
}

Tape::Var Tape::add_rowvec(Var a, Var rowv) {
  const Tensor& av = val(a);
  const Tensor& rv = val(rowv);
  std::size_t b = av.rows(), c = av.cols();
  if (rv.size() != c)
    throw ShapeError("add_rowvec: bias axis mismatch, cols " + std::to_string(c) +
                     " vs bias length " + std::to_string(rv.size()));
  Tensor out = av;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += rv.data[j];
  bool rg = requires_grad(a) || requires_grad(rowv);
  int ia = a.id, ir = rowv.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ia, ir, b, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    t.acc(ia, g.data.data(), g.size());
    Node& nr = t.nodes_[ir];
    if (nr.requires_grad)
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) nr.grad.data[j] += g.data[i * c + j];
  });
}

Tape::Var Tape::affine(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

Tape::Var Tape::scaled_softmax(Var logits, double beta) {
  if (!(beta > 0.0)) throw ParamError("scaled_softmax: beta must be positive");
  const Tensor& lv = val(logits);
  std::size_t b = lv.rows(), c = lv.cols();
  Tensor out({b, c});
  for (std::size_t i = 0; i < b; ++i) {
    const double* xi = lv.data.data() + i * c;
    double* yi = out.data.data() + i * c;
    double mx = xi[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      yi[j] = std::exp(beta * (xi[j] - mx));
      z += yi[j];
    }
    for (std::size_t j = 0; j < c; ++j) yi[j] /= z;
  }
  int il = logits.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(logits), [il, beta, b, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Node& nl = t.nodes_[il];
    if (!nl.requires_grad) return;
    for (std::size_t i = 0; i < b; ++i) {
      const double* gi = g.data.data() + i * c;
      const double* yi = y.data.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gi[j] * yi[j];
      double* di = nl.grad.data.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) di[j] += beta * yi[j] * (gi[j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input");
  std::size_t b = val(parts[0]).rows(), total = 0;
  bool rg = false;
  for (Var p : parts) {
    if (val(p).rows() != b) throw ShapeError("concat_cols: row count mismatch");
    total += val(p).cols();
    rg = rg || requires_grad(p);
  }
  Tensor out({b, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = val(p);
    std::size_t c = pv.cols();
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(pv.data.data() + i * c, c, out.data.data() + i * total + off);
    off += c;
  }
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    ids.push_back(p.id);
    widths.push_back(val(p).cols());
  }
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ids, widths, b, total, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    std::size_t off2 = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      Node& np = t.nodes_[ids[p]];
      if (np.requires_grad)
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < widths[p]; ++j)
            np.grad.data[i * widths[p] + j] += g.data[i * total + off2 + j];
      off2 += widths[p];
    }
  });
}

Tape::Var Tape::slice_cols(Var a, std::size_t lo, std::size_t hi) {
  const Tensor& av = val(a);
  std::size_t b = av.rows(), c = av.cols();
  if (lo >= hi || hi > c) throw ShapeError("slice_cols: bad range");
  std::size_t w = hi - lo;
  Tensor out({b, w});
  for (std::size_t i = 0; i < b; ++i)
    std::copy_n(av.data.data() + i * c + lo, w, out.data.data() + i * w);
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, lo, w, b, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < w; ++j) na.grad.data[i * c + lo + j] += g.data[i * w + j];
  });
}

Tape::Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: empty input");
  std::size_t c = val(rows[0]).cols();
  bool rg = false;
  for (Var r : rows) {
    if (val(r).rows() != 1 || val(r).cols() != c)
      throw ShapeError("stack_rows: each part must be a single row of equal width");
    rg = rg || requires_grad(r);
  }
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(val(rows[i]).data.data(), c, out.data.data() + i * c);
  std::vector<int> ids;
  for (Var r : rows) ids.push_back(r.id);
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [ids, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < ids.size(); ++i)
      t.acc(ids[i], g.data.data() + i * c, c);
  });
}

Tape::Var Tape::row(Var a, std::size_t i) {
  const Tensor& av = val(a);
  std::size_t b = av.rows(), c = av.cols();
  if (i >= b) throw ShapeError("row: index out of range");
  Tensor out({1, c});
  std::copy_n(av.data.data() + i * c, c, out.data.data());
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, i, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t j = 0; j < c; ++j) na.grad.data[i * c + j] += g.data[j];
  });
}

Tape::Var Tape::gather_rows(Var matrix, const std::vector<std::size_t>& ids) {
  const Tensor& mv = val(matrix);
  std::size_t r = mv.rows(), c = mv.cols();
  Tensor out({ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= r) throw DataError("gather_rows: row id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(mv.data.data() + ids[i] * c, c, out.data.data() + i * c);
  }
  int im = matrix.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(matrix), [im, ids, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[im];
    if (nm.requires_grad)
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) nm.grad.data[ids[i] * c + j] += g.data[i * c + j];
  });
}

Tape::Var Tape::pick_cols(Var a, const std::vector<std::size_t>& ids) {
  const Tensor& av = val(a);
  std::size_t b = av.rows(), c = av.cols();
  if (ids.size() != b) throw ShapeError("pick_cols: one index per row required");
  Tensor out({b, 1});
  for (std::size_t i = 0; i < b; ++i) {
    if (ids[i] >= c) throw DataError("pick_cols: column id out of range");
    out.data[i] = av.data[i * c + ids[i]];
  }
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, ids, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < ids.size(); ++i) na.grad.data[i * c + ids[i]] += g.data[i];
  });
}

Tape::Var Tape::sum_all(Var a) {
  const Tensor& av = val(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(Tensor::scalar(s), requires_grad(a), [ia, self](Tape& t) {
    double g = t.nodes_[self].grad.data[0];
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (double& v : na.grad.data) v += g;
  });
}

Tape::Var Tape::mean_all(Var a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size()));
}

Tape::Var Tape::mean_rows(Var a) {
  const Tensor& av = val(a);
  std::size_t b = av.rows(), c = av.cols();
  Tensor out({1, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j] += av.data[i * c + j];
  for (double& v : out.data) v /= static_cast<double>(b);
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, b, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          na.grad.data[i * c + j] += g.data[j] / static_cast<double>(b);
  });
}

Tape::Var Tape::sum_blocks(Var a, std::size_t block) {
  const Tensor& av = val(a);
  std::size_t b = av.rows(), c = av.cols();
  if (block == 0 || c % block != 0) throw ShapeError("sum_blocks: block size must divide cols");
  std::size_t g = c / block;
  Tensor out({b, g});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * g + j / block] += av.data[i * c + j];
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(a), [ia, b, c, block, self](Tape& t) {
    const Tensor& gr = t.nodes_[self].grad;
    std::size_t g2 = c / block;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          na.grad.data[i * c + j] += gr.data[i * g2 + j / block];
  });
}

Tape::Var Tape::scale_rows_const(Var a, const Tensor& per_row) {
  const Tensor& av = val(a);
  std::size_t b = av.rows(), c = av.cols();
  if (per_row.size() != b) throw ShapeError("scale_rows_const: one factor per row required");
  Tensor out = av;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= per_row.data[i];
  int ia = a.id;
  int self = static_cast<int>(nodes_.size());
  Tensor factors = per_row;
  return push(std::move(out), requires_grad(a), [ia, factors, b, c, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Node& na = t.nodes_[ia];
    if (na.requires_grad)
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          na.grad.data[i * c + j] += g.data[i * c + j] * factors.data[i];
  });
}

Tape::Var Tape::straight_through(Var soft, Tensor hard) {
  if (!val(soft).same_shape(hard))
    throw ShapeError("straight_through: soft/hard shape mismatch");
  int is = soft.id;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(hard), requires_grad(soft), [is, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    t.acc(is, g.data.data(), g.size());
  });
}

// ---------------------------------------------------------------------------

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw ContractError("backward: loss must be scalar, got " + ln.value.shape_str());
  if (!ln.requires_grad)
    throw ContractError("backward: loss does not depend on any requires_grad leaf");
  int top = loss.id;
  for (int i = 0; i <= top; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad) {
      n.grad = Tensor(n.value.shape, 0.0);
    }
  }
  nodes_[static_cast<std::size_t>(top)].grad.data[0] = 1.0;
  for (int i = top; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.back) n.back(*this);
  }
}

}  // namespace capgan
