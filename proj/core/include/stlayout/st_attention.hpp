#pragma once

#include <cstddef>

#include "stlayout/correspondence.hpp"
#include "stlayout/layout.hpp"
#include "stlayout/numerics.hpp"

namespace stlayout {

enum class attention_kind { self, cross };

// Binary guidance map for one query frame.
//
// self:  values is (height*width) x (frames*height*width); entry (a, b) is 1
//        iff query token a of `frame` and key token b carry the same attribute
//        id (background id 0 counts as an id like any other).
// cross: values is (height*width) x prompt-length; column b is zero when
//        prompt token b is bound to no attribute, otherwise the binary mask of
//        that attribute in `frame`.
struct condition_map {
  attention_kind kind = attention_kind::self;
  std::size_t frame = 0;
  matrix values;
};

condition_map build_self_condition_map(const layout_video& layout, std::size_t frame);
condition_map build_cross_condition_map(const layout_video& layout, std::size_t frame,
                                        const token_attribute_map& tokens);

// How the size regularizer weights a (query, key) pair.
//   key_side: the area proportion of the key token's attribute.
//   pair_min: the smaller of the query-side and key-side proportions.
enum class size_mode { key_side, pair_min };

// Area-proportion damping aligned with a condition map: entries lie in [0, 1]
// and scale how strongly a pair is modulated (large regions get weaker
// pushes). Same shape as the condition map it was built for.
struct size_regularizer {
  matrix values;
};

// `tokens` must be the map the cross condition map was built from and null
// for self maps.
size_regularizer build_size_regularizer(const condition_map& map, const attribute_areas& areas,
                                        const layout_video& layout,
                                        const token_attribute_map* tokens,
                                        size_mode mode = size_mode::key_side);

// Per-step modulation strength: value_at(step) decays linearly from
// base_strength at step 0 to 0 at active_steps, and is exactly 0 from
// active_steps on.
struct lambda_schedule {
  std::size_t total_steps = 50;
  std::size_t active_steps = 15;
  double base_strength = 1.0;

  void validate() const;
  double value_at(std::size_t step) const;
};

// Additive attention bias:
//   M = lambda * R .* m_pos .* (1 - S)  -  lambda * (1 - R) .* m_neg .* (1 - S)
// where R is the condition map, S the size regularizer and (m_pos, m_neg) the
// per-row decomposition of `sim`. Positions with R = 1 are pushed toward the
// row maximum, positions with R = 0 toward the row minimum.
matrix modulation_term(const similarity_matrix& sim, const condition_map& map,
                       const size_regularizer& s, double lambda);

struct attention_output {
  matrix attended;       // queries x value-width
  matrix attention_map;  // queries x keys, rows sum to 1
};

// Scaled dot-product attention over raw q/k/v feature rows.
attention_output attention(const matrix& q, const matrix& k, const matrix& v,
                           std::size_t head_dim);

// Attention with the layout-guided bias added to the logits before softmax.
// lambda == 0 takes the exact unmodulated path, bit for bit.
attention_output modulated_attention(const matrix& q, const matrix& k, const matrix& v,
                                     const condition_map& map, const size_regularizer& s,
                                     double lambda, std::size_t head_dim);

// Same result as modulated_attention, computed over blocks of chunk_size
// query rows so intermediates stay proportional to chunk_size * keys. Every
// step of the computation is local to a query row, so the outputs are
// bitwise identical to the unchunked path.
attention_output sliced_modulated_attention(const matrix& q, const matrix& k, const matrix& v,
                                            const condition_map& map, const size_regularizer& s,
                                            double lambda, std::size_t head_dim,
                                            std::size_t chunk_size);

}  // namespace stlayout
