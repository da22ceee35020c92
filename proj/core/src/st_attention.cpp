#include "stlayout/st_attention.hpp"

#include <cmath>
#include <string>

namespace stlayout {

namespace {

std::string shape_str(const matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_frame(const layout_video& layout, std::size_t frame) {
  if (frame >= layout.frames()) {
    throw bounds_error("frame " + std::to_string(frame) + " outside layout with " +
                       std::to_string(layout.frames()) + " frames");
  }
}

void check_guidance_shapes(const condition_map& map, const size_regularizer& s,
                           std::size_t queries, std::size_t keys) {
  if (map.values.rows() != queries || map.values.cols() != keys) {
    throw shape_error("condition map is " + shape_str(map.values) + " but attention needs " +
                      std::to_string(queries) + "x" + std::to_string(keys));
  }
  if (s.values.rows() != map.values.rows() || s.values.cols() != map.values.cols()) {
    throw shape_error("size regularizer " + shape_str(s.values) +
                      " does not match condition map " + shape_str(map.values));
  }
}

void check_qkv(const matrix& q, const matrix& k, const matrix& v, std::size_t head_dim) {
  if (head_dim == 0) throw validation_error("attention head_dim must be positive");
  if (q.cols() != head_dim || k.cols() != head_dim) {
    throw shape_error("attention expects q/k feature width " + std::to_string(head_dim) +
                      ", got q " + shape_str(q) + ", k " + shape_str(k));
  }
  if (v.rows() != k.rows()) {
    throw shape_error("attention keys/values disagree: k " + shape_str(k) + ", v " +
                      shape_str(v));
  }
}

// Bias for sim rows [row_offset, row_offset + sim.rows()) of the map. All
// arithmetic is per-entry and per-row, which is what makes chunked evaluation
// bitwise identical to the full one.
matrix modulation_block(const matrix& sim, const condition_map& map, const size_regularizer& s,
                        double lambda, std::size_t row_offset) {
  if (lambda < 0.0) {
    throw validation_error("modulation strength must be non-negative, got " +
                           std::to_string(lambda));
  }
  if (!std::isfinite(lambda)) throw numeric_error("modulation strength is not finite");
  if (row_offset + sim.rows() > map.values.rows() || sim.cols() != map.values.cols()) {
    throw shape_error("similarity block " + shape_str(sim) + " at row " +
                      std::to_string(row_offset) + " does not fit condition map " +
                      shape_str(map.values));
  }
  if (s.values.rows() != map.values.rows() || s.values.cols() != map.values.cols()) {
    throw shape_error("size regularizer " + shape_str(s.values) +
                      " does not match condition map " + shape_str(map.values));
  }

  const auto pnv = compute_pos_neg(similarity_matrix{sim});
  matrix out(sim.rows(), sim.cols(), 0.0);
  for (std::size_t a = 0; a < sim.rows(); ++a) {
    for (std::size_t b = 0; b < sim.cols(); ++b) {
      const double r = map.values(row_offset + a, b);
      const double damp = 1.0 - s.values(row_offset + a, b);
      out(a, b) = lambda * r * pnv.m_pos(a, b) * damp -
                  lambda * (1.0 - r) * pnv.m_neg(a, b) * damp;
    }
  }
  out.check_finite("modulation term");
  return out;
}

attention_output attend_rows(const matrix& q, const matrix& k, const matrix& v,
                             const condition_map* map, const size_regularizer* s, double lambda,
                             std::size_t head_dim, std::size_t row_offset) {
  const double scale = std::sqrt(static_cast<double>(head_dim));
  similarity_matrix sim = similarity(q, k);
  if (lambda > 0.0) {
    const matrix bias = modulation_block(sim.values, *map, *s, lambda, row_offset);
    for (std::size_t i = 0; i < sim.values.size(); ++i)
      sim.values.data()[i] += bias.data()[i];
  }
  for (double& x : sim.values.data()) x /= scale;
  attention_output out;
  out.attention_map = softmax_rows(sim.values);
  out.attended = matmul(out.attention_map, v);
  return out;
}

}  // namespace

condition_map build_self_condition_map(const layout_video& layout, std::size_t frame) {
  check_frame(layout, frame);
  const std::size_t hw = layout.height() * layout.width();
  const std::size_t keys = layout.frames() * hw;
  condition_map out{attention_kind::self, frame, matrix(hw, keys, 0.0)};
  const auto& labels = layout.flat_labels();
  const std::size_t query_base = frame * hw;
  for (std::size_t a = 0; a < hw; ++a) {
    const std::uint8_t qa = labels[query_base + a];
    for (std::size_t b = 0; b < keys; ++b) {
      if (labels[b] == qa) out.values(a, b) = 1.0;
    }
  }
  return out;
}

condition_map build_cross_condition_map(const layout_video& layout, std::size_t frame,
                                        const token_attribute_map& tokens) {
  check_frame(layout, frame);
  if (tokens.size() == 0) throw validation_error("cross condition map needs at least one token");
  const std::size_t hw = layout.height() * layout.width();
  condition_map out{attention_kind::cross, frame, matrix(hw, tokens.size(), 0.0)};
  const auto& labels = layout.flat_labels();
  const std::size_t query_base = frame * hw;
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    const int id = tokens.attribute_ids[b];
    if (id < 0 || id > layout.num_attributes()) {
      throw validation_error("token " + std::to_string(b) + " names attribute " +
                             std::to_string(id) + " outside the layout's ids");
    }
    if (id == 0) continue;  // unbound tokens keep a zero column
    for (std::size_t a = 0; a < hw; ++a) {
      if (static_cast<int>(labels[query_base + a]) == id) out.values(a, b) = 1.0;
    }
  }
  return out;
}

size_regularizer build_size_regularizer(const condition_map& map, const attribute_areas& areas,
                                        const layout_video& layout,
                                        const token_attribute_map* tokens, size_mode mode) {
  if (areas.proportions.size() != static_cast<std::size_t>(layout.num_attributes()) + 1) {
    throw shape_error("attribute areas carry " + std::to_string(areas.proportions.size()) +
                      " entries for " + std::to_string(layout.num_attributes() + 1) +
                      " attribute ids");
  }
  const std::size_t hw = layout.height() * layout.width();
  if (map.values.rows() != hw) {
    throw shape_error("condition map " + shape_str(map.values) + " does not match layout with " +
                      std::to_string(hw) + " tokens per frame");
  }
  check_frame(layout, map.frame);

  const auto& labels = layout.flat_labels();
  const std::size_t query_base = map.frame * hw;
  size_regularizer out{matrix(map.values.rows(), map.values.cols(), 0.0)};

  if (map.kind == attention_kind::self) {
    if (tokens != nullptr) {
      throw validation_error("self-attention size regularizer takes no token map");
    }
    if (map.values.cols() != layout.frames() * hw) {
      throw shape_error("self condition map " + shape_str(map.values) +
                        " does not cover all " + std::to_string(layout.frames() * hw) +
                        " key tokens");
    }
    for (std::size_t b = 0; b < map.values.cols(); ++b) {
      const double key_area = areas.proportions[labels[b]];
      for (std::size_t a = 0; a < map.values.rows(); ++a) {
        double v = key_area;
        if (mode == size_mode::pair_min) {
          v = std::min(v, areas.proportions[labels[query_base + a]]);
        }
        out.values(a, b) = v;
      }
    }
    return out;
  }

  if (tokens == nullptr) {
    throw validation_error("cross-attention size regularizer needs the token map");
  }
  if (map.values.cols() != tokens->size()) {
    throw shape_error("cross condition map " + shape_str(map.values) + " does not match " +
                      std::to_string(tokens->size()) + " prompt tokens");
  }
  for (std::size_t b = 0; b < tokens->size(); ++b) {
    const int id = tokens->attribute_ids[b];
    // Unassociated tokens keep proportion 0: their negative push is undamped.
    if (id == 0) continue;
    const double key_area = areas.proportions[static_cast<std::size_t>(id)];
    for (std::size_t a = 0; a < map.values.rows(); ++a) {
      double v = key_area;
      if (mode == size_mode::pair_min) {
        v = std::min(v, areas.proportions[labels[query_base + a]]);
      }
      out.values(a, b) = v;
    }
  }
  return out;
}

void lambda_schedule::validate() const {
  if (total_steps == 0) throw validation_error("schedule needs at least one step");
  if (active_steps > total_steps) {
    throw validation_error("active_steps " + std::to_string(active_steps) +
                           " exceeds total_steps " + std::to_string(total_steps));
  }
  if (!(base_strength >= 0.0) || !std::isfinite(base_strength)) {
    throw validation_error("base modulation strength must be finite and non-negative");
  }
}

double lambda_schedule::value_at(std::size_t step) const {
  validate();
  if (step >= total_steps) {
    throw bounds_error("step " + std::to_string(step) + " outside schedule of " +
                       std::to_string(total_steps) + " steps");
  }
  if (step >= active_steps) return 0.0;
  // Linear decay over the active window; active_steps > step >= 0 here.
  return base_strength *
         (1.0 - static_cast<double>(step) / static_cast<double>(active_steps));
}

matrix modulation_term(const similarity_matrix& sim, const condition_map& map,
                       const size_regularizer& s, double lambda) {
  if (sim.values.rows() != map.values.rows()) {
    throw shape_error("similarity " + shape_str(sim.values) + " does not match condition map " +
                      shape_str(map.values));
  }
  return modulation_block(sim.values, map, s, lambda, 0);
}

attention_output attention(const matrix& q, const matrix& k, const matrix& v,
                           std::size_t head_dim) {
  check_qkv(q, k, v, head_dim);
  return attend_rows(q, k, v, nullptr, nullptr, 0.0, head_dim, 0);
}

attention_output modulated_attention(const matrix& q, const matrix& k, const matrix& v,
                                     const condition_map& map, const size_regularizer& s,
                                     double lambda, std::size_t head_dim) {
  check_qkv(q, k, v, head_dim);
  check_guidance_shapes(map, s, q.rows(), k.rows());
  if (lambda < 0.0) {
    throw validation_error("modulation strength must be non-negative, got " +
                           std::to_string(lambda));
  }
  // lambda == 0 must reproduce plain attention exactly, so skip the bias
  // entirely instead of adding zeros (which could still flip signed zeros).
  return attend_rows(q, k, v, &map, &s, lambda, head_dim, 0);
}

attention_output sliced_modulated_attention(const matrix& q, const matrix& k, const matrix& v,
                                            const condition_map& map, const size_regularizer& s,
                                            double lambda, std::size_t head_dim,
                                            std::size_t chunk_size) {
  check_qkv(q, k, v, head_dim);
  check_guidance_shapes(map, s, q.rows(), k.rows());
  if (lambda < 0.0) {
    throw validation_error("modulation strength must be non-negative, got " +
                           std::to_string(lambda));
  }
  if (chunk_size == 0) throw validation_error("chunk_size must be positive");

  attention_output out;
  out.attended = matrix(q.rows(), v.cols(), 0.0);
  out.attention_map = matrix(q.rows(), k.rows(), 0.0);

  for (std::size_t row0 = 0; row0 < q.rows(); row0 += chunk_size) {
    const std::size_t rows = std::min(chunk_size, q.rows() - row0);
    matrix qb(rows, q.cols(), 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      auto src = q.row(row0 + i);
      auto dst = qb.row(i);
      for (std::size_t d = 0; d < src.size(); ++d) dst[d] = src[d];
    }
    const attention_output block = attend_rows(qb, k, v, &map, &s, lambda, head_dim, row0);
    for (std::size_t i = 0; i < rows; ++i) {
      auto am = block.attention_map.row(i);
      auto at = block.attended.row(i);
      auto om = out.attention_map.row(row0 + i);
      auto oa = out.attended.row(row0 + i);
      for (std::size_t c = 0; c < am.size(); ++c) om[c] = am[c];
      for (std::size_t c = 0; c < at.size(); ++c) oa[c] = at[c];
    }
  }
  return out;
}

}  // namespace stlayout
