#pragma once

#include <functional>
#include <vector>

#include "capgan/tensor.hpp"

namespace capgan {

// Reverse-mode autodiff over a recorded computation. One tape per forward
// pass; nodes are appended in execution order, which is by construction a
// topological order. Not thread-safe; use one tape per thread.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& val(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  // --- elementwise / shape ops -------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, const Tensor& c);
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var exp_(Var a);
  Var abs_(Var a);    // d|x|/dx uses sign(x) with sign(0)=0
  Var sqrt_(Var a);   // derivative at 0 taken as 0
  Var log_clamped(Var a, double eps = 1e-300);  // grad 0 where a < eps
  Var clamp_(Var a, double lo, double hi);      // grad 0 outside (lo, hi)

  // --- linear algebra ----------------------------------------------------
  Var matmul(Var a, Var b);
  Var add_rowvec(Var a, Var row);           // broadcast [J] over rows of [B x J]
  Var affine(Var x, Var w, Var b);          // x*w + b
  Var scaled_softmax(Var logits, double beta);  // softmax(beta * row)

  // --- structure ---------------------------------------------------------
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t lo, std::size_t hi);
  Var stack_rows(const std::vector<Var>& rows);  // each [1 x C] -> [R x C]
  Var row(Var a, std::size_t i);                 // [1 x C]
  Var gather_rows(Var matrix, const std::vector<std::size_t>& ids);
  Var pick_cols(Var a, const std::vector<std::size_t>& ids);  // per-row gather -> [B x 1]
  Var sum_all(Var a);    // [1 x 1]
  Var mean_all(Var a);   // [1 x 1]
  Var mean_rows(Var a);  // [1 x C]
  Var sum_blocks(Var a, std::size_t block);  // sum groups of `block` adjacent cols
  Var scale_rows_const(Var a, const Tensor& per_row);  // row i scaled by per_row[i]

  // Forward value is `hard`; gradients flow to `soft` unchanged.
  Var straight_through(Var soft, Tensor hard);

  // Populates gradients for every requires_grad node reachable from `loss`.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;

  Var push(Tensor value, bool rg, std::function<void(Tape&)> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_same_shape(Var a, Var b, const char* op) const;
  // Accumulate g into the grad buffer of node id (if it requires grad).
  void acc(int id, const double* g, std::size_t n);
  friend struct TapeOps;
};

}  // namespace capgan
