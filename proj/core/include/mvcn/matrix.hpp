#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mvcn {

/// Small dense row-major matrix. Used for model coefficients and cost
/// matrices; not intended for heavy linear algebra.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n, double scale = 1.0) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool empty() const { return data.empty(); }

  bool is_zero() const {
    for (double v : data)
      if (v != 0.0) return false;
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace mvcn
