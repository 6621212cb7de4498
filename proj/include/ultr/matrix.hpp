#pragma once

#include <cstddef>
#include <vector>

#include "ultr/errors.hpp"

namespace ultr {

// Dense row-major matrix of 64-bit floats. The only tensor type in the
// toolkit; vectors are represented as 1xN or std::vector<double>.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// Throws NumericError if any entry is NaN or Inf.
void check_finite(const Matrix& m, const char* what);
void check_finite(const std::vector<double>& v, const char* what);

}  // namespace ultr
