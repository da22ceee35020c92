#include "stlayout/correspondence.hpp"

#include <string>

namespace stlayout {

similarity_matrix similarity(const matrix& queries, const matrix& keys) {
  if (queries.cols() != keys.cols()) {
    throw shape_error("similarity feature width mismatch: queries have " +
                      std::to_string(queries.cols()) + " features, keys " +
                      std::to_string(keys.cols()));
  }
  if (keys.rows() == 0) throw shape_error("similarity: no keys");
  matrix out(queries.rows(), keys.rows(), 0.0);
  for (std::size_t a = 0; a < queries.rows(); ++a) {
    auto q = queries.row(a);
    for (std::size_t b = 0; b < keys.rows(); ++b) {
      auto k = keys.row(b);
      double dot = 0.0;
      for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * k[d];
      out(a, b) = dot;
    }
  }
  out.check_finite("similarity");
  return {std::move(out)};
}

pos_neg_values compute_pos_neg(const similarity_matrix& sim) {
  const matrix& v = sim.values;
  if (v.cols() == 0) throw shape_error("compute_pos_neg: similarity matrix has no keys");
  const auto row_max = rowwise_extreme(v, extreme::max);
  const auto row_min = rowwise_extreme(v, extreme::min);
  pos_neg_values out{matrix(v.rows(), v.cols(), 0.0), matrix(v.rows(), v.cols(), 0.0)};
  for (std::size_t a = 0; a < v.rows(); ++a) {
    for (std::size_t b = 0; b < v.cols(); ++b) {
      out.m_pos(a, b) = row_max[a] - v(a, b);
      out.m_neg(a, b) = v(a, b) - row_min[a];
    }
  }
  return out;
}

match_result best_match(std::span<const double> query, const matrix& keys) {
  if (keys.rows() == 0) throw shape_error("best_match: no keys");
  if (query.size() != keys.cols()) {
    throw shape_error("best_match feature width mismatch: query has " +
                      std::to_string(query.size()) + " features, keys " +
                      std::to_string(keys.cols()));
  }
  double qnorm = 0.0;
  for (double x : query) qnorm += x * x;
  if (qnorm == 0.0) throw validation_error("best_match: query has zero norm");

  match_result out;
  for (std::size_t b = 0; b < keys.rows(); ++b) {
    const double v = cosine_similarity(query, keys.row(b));
    if (b == 0) {
      out.best_value = out.worst_value = v;
      continue;
    }
    if (v > out.best_value) {
      out.best_value = v;
      out.best_index = b;
    }
    if (v < out.worst_value) {
      out.worst_value = v;
      out.worst_index = b;
    }
  }
  return out;
}

}  // namespace stlayout
