#include "stlayout/numerics.hpp"

#include <cmath>
#include <string>

namespace stlayout {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

matrix::matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw numeric_error("matrix fill value is not finite");
}

matrix::matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw shape_error("matrix data size " + std::to_string(data_.size()) +
                      " does not match shape " + shape_str(rows, cols));
  }
  check_finite("matrix construction");
}

matrix matrix::identity(std::size_t n) {
  matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double& matrix::at(std::size_t r, std::size_t c) {
  if (r >= rows_ || c >= cols_) {
    throw bounds_error("matrix index (" + std::to_string(r) + "," + std::to_string(c) +
                       ") outside shape " + shape_str(rows_, cols_));
  }
  return data_[r * cols_ + c];
}

double matrix::at(std::size_t r, std::size_t c) const {
  return const_cast<matrix*>(this)->at(r, c);
}

std::span<double> matrix::row(std::size_t r) {
  if (r >= rows_) {
    throw bounds_error("matrix row " + std::to_string(r) + " outside shape " +
                       shape_str(rows_, cols_));
  }
  return {data_.data() + r * cols_, cols_};
}

std::span<const double> matrix::row(std::size_t r) const {
  if (r >= rows_) {
    throw bounds_error("matrix row " + std::to_string(r) + " outside shape " +
                       shape_str(rows_, cols_));
  }
  return {data_.data() + r * cols_, cols_};
}

void matrix::check_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw numeric_error(std::string(what) + ": non-finite entry");
    }
  }
}

matrix matmul(const matrix& a, const matrix& b) {
  if (a.cols() != b.rows()) {
    throw shape_error("matmul shape mismatch: " + shape_str(a.rows(), a.cols()) + " * " +
                      shape_str(b.rows(), b.cols()));
  }
  matrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

matrix transpose(const matrix& m) {
  matrix out(m.cols(), m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

matrix softmax_rows(const matrix& logits) {
  if (logits.cols() == 0) throw shape_error("softmax_rows: rows are empty");
  matrix out(logits.rows(), logits.cols(), 0.0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    double m = in[0];
    for (double v : in)
      if (v > m) m = v;
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      const double e = std::exp(in[c] - m);
      out(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < in.size(); ++c) out(r, c) /= sum;
  }
  return out;
}

std::vector<double> rowwise_extreme(const matrix& m, extreme which) {
  if (m.cols() == 0) throw shape_error("rowwise_extreme: matrix has no columns");
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double best = row[0];
    for (double v : row) {
      if (which == extreme::max ? v > best : v < best) best = v;
    }
    out[r] = best;
  }
  return out;
}

std::vector<double> sums(const matrix& m, axis along) {
  if (along == axis::rows) {
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (double v : m.row(r)) out[r] += v;
    return out;
  }
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b, bool* zero_norm) {
  if (a.size() != b.size()) {
    throw shape_error("cosine_similarity length mismatch: " + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()));
  }
  if (zero_norm) *zero_norm = false;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm) *zero_norm = true;
    return 0.0;
  }
  double v = dot / (std::sqrt(na) * std::sqrt(nb));
  if (v > 1.0) v = 1.0;
  if (v < -1.0) v = -1.0;
  return v;
}

}  // namespace stlayout
