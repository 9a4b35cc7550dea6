#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace capgan {

// Dense row-major array of doubles. Rank 1 tensors are treated as a
// single row where a matrix is expected.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-D view: rank-1 tensors are 1 x n.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// C[m x n] (+)= op(A) * op(B), op = transpose when t{a,b} set.
// A is m x k (or k x m when ta), B is k x n (or n x k when tb).
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);

}  // namespace capgan
