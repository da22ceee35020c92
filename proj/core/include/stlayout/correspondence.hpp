#pragma once

#include <cstddef>

#include "stlayout/numerics.hpp"

namespace stlayout {

// Raw dot-product similarity: values(a, b) = <queries.row(a), keys.row(b)>.
// Computed with a direct scalar loop (not matmul) so the two paths stay
// independent checks of each other.
struct similarity_matrix {
  matrix values;  // queries x keys
};

similarity_matrix similarity(const matrix& queries, const matrix& keys);

// Per-row distance-to-extreme decomposition of a similarity matrix:
//   m_pos(a, b) = rowmax_a - values(a, b)   (cost of promoting key b to the top)
//   m_neg(a, b) = values(a, b) - rowmin_a   (margin above the row floor)
// Each row of m_pos and of m_neg contains a zero, and their sum is constant
// along every row.
struct pos_neg_values {
  matrix m_pos;
  matrix m_neg;
};

pos_neg_values compute_pos_neg(const similarity_matrix& sim);

// Cosine-similarity nearest / farthest key for one query row.
struct match_result {
  std::size_t best_index = 0;   // argmax cosine; ties resolve to the lowest index
  std::size_t worst_index = 0;  // argmin cosine; ties resolve to the lowest index
  double best_value = 0.0;
  double worst_value = 0.0;
};

match_result best_match(std::span<const double> query, const matrix& keys);

}  // namespace stlayout
