#include "capgan/tensor.hpp"

#include <cmath>
#include <sstream>

#include "capgan/error.hpp"

namespace capgan {

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("Tensor: zero-sized dimension");
    n *= d;
  }
  if (shape.empty()) n = 0;
  data.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1, 1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::vec(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  if (rows * cols != v.size()) throw ShapeError("Tensor::matrix: data size mismatch");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

std::size_t Tensor::rows() const {
  if (shape.size() == 1) return 1;
  if (shape.size() == 2) return shape[0];
  throw ShapeError("Tensor: 2-D view of rank-" + std::to_string(shape.size()) + " tensor");
}

std::size_t Tensor::cols() const {
  if (shape.size() == 1) return shape[0];
  if (shape.size() == 2) return shape[1];
  throw ShapeError("Tensor: 2-D view of rank-" + std::to_string(shape.size()) + " tensor");
}

double& Tensor::at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!ta && tb) {
    // C[i,j] += sum_p A[i,p] * B[j,p]
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * k;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        ci[j] += s;
      }
    }
  } else if (ta && !tb) {
    // C[i,j] += sum_p A[p,i] * B[p,j]
    for (std::size_t p = 0; p < k; ++p) {
      const double* ap = a + p * m;
      const double* bp = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        double av = ap[i];
        if (av == 0.0) continue;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else {
    // C[i,j] += sum_p A[p,i] * B[j,p]
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
        c[i * n + j] += s;
      }
  }
}

}  // namespace capgan
