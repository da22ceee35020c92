#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stlayout/errors.hpp"

namespace stlayout {

// Dense row-major matrix of doubles. Construction and every mutation entry
// point keep the invariant that all entries are finite.
class matrix {
 public:
  matrix() = default;
  matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Throws numeric_error if any entry is not finite.
  void check_finite(const char* what) const;

  bool operator==(const matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class axis { rows, cols };
enum class extreme { max, min };

matrix matmul(const matrix& a, const matrix& b);
matrix transpose(const matrix& m);

// Per-row numerically stable softmax: subtracts the row max before
// exponentiation. Rows must be non-empty.
matrix softmax_rows(const matrix& logits);

// Per-row max or min; requires cols > 0.
std::vector<double> rowwise_extreme(const matrix& m, extreme which);

// Reduction along one axis: axis::rows yields per-row sums (length rows),
// axis::cols per-column sums (length cols).
std::vector<double> sums(const matrix& m, axis along);

// Cosine similarity clamped to [-1, 1]. A zero-norm operand yields 0 and sets
// *zero_norm when provided.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* zero_norm = nullptr);

}  // namespace stlayout
