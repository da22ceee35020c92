#include <cmath>
#include <string>

#include "stlayout/pipeline.hpp"
#include "stlayout/rng.hpp"

namespace stlayout {

namespace {

// Uniform init with variance 1/fan_in; on top of the small output gain this
// keeps the predictor's round trips numerically tame.
matrix init_weights(rng& r, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
  matrix m(fan_in, fan_out, 0.0);
  for (std::size_t i = 0; i < fan_in; ++i)
    for (std::size_t j = 0; j < fan_out; ++j) m(i, j) = r.next_in(-a, a);
  return m;
}

matrix concat_rows(const std::vector<matrix>& frames) {
  std::size_t rows = 0;
  for (const auto& f : frames) rows += f.rows();
  matrix out(rows, frames[0].cols(), 0.0);
  std::size_t r0 = 0;
  for (const auto& f : frames) {
    for (std::size_t r = 0; r < f.rows(); ++r) {
      auto src = f.row(r);
      auto dst = out.row(r0 + r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c];
    }
    r0 += f.rows();
  }
  return out;
}

void add_in_place(matrix& into, const matrix& other) {
  for (std::size_t i = 0; i < into.size(); ++i) into.data()[i] += other.data()[i];
}

}  // namespace

toy_denoiser::toy_denoiser(const denoiser_config& config) : config_(config) {
  if (config.channels == 0 || config.channels % num_heads != 0) {
    throw validation_error("denoiser channels must be a positive multiple of " +
                           std::to_string(num_heads) + ", got " +
                           std::to_string(config.channels));
  }
  if (config.text_dim == 0) throw validation_error("denoiser text_dim must be positive");
  if (!(config.out_gain > 0.0) || !std::isfinite(config.out_gain)) {
    throw validation_error("denoiser out_gain must be finite and positive");
  }

  const std::size_t c = config.channels;
  const std::size_t dh = c / num_heads;
  rng r(splitmix64(config.seed));
  blocks_.resize(num_blocks);
  for (auto& b : blocks_) {
    b.self_heads.resize(num_heads);
    for (auto& h : b.self_heads) {
      h.wq = init_weights(r, c, dh);
      h.wk = init_weights(r, c, dh);
      h.wv = init_weights(r, c, dh);
    }
    b.self_out = init_weights(r, c, c);
    b.cross_heads.resize(num_heads);
    for (auto& h : b.cross_heads) {
      h.wq = init_weights(r, c, dh);
      h.wk = init_weights(r, config.text_dim, dh);
      h.wv = init_weights(r, config.text_dim, dh);
    }
    b.cross_out = init_weights(r, c, c);
    b.pointwise = init_weights(r, c, c);
  }
  out_proj_ = init_weights(r, c, c);
}

std::pair<std::size_t, std::size_t> toy_denoiser::block_grid(std::size_t block,
                                                             std::size_t height,
                                                             std::size_t width) {
  if (block >= num_blocks) throw bounds_error("block index outside denoiser");
  if (block == 0) return {height, width};
  return {(height + 1) / 2, (width + 1) / 2};
}

std::size_t toy_denoiser::layer_index(std::size_t block, attention_kind kind) {
  if (block >= num_blocks) throw bounds_error("block index outside denoiser");
  return block * 2 + (kind == attention_kind::cross ? 1 : 0);
}

std::vector<matrix> toy_denoiser::run_block(std::size_t block,
                                            const std::vector<matrix>& frame_tokens,
                                            const matrix& text, std::size_t grid_height,
                                            std::size_t grid_width,
                                            const step_context* ctx) const {
  const block_weights& w = blocks_[block];
  const std::size_t c = config_.channels;
  const std::size_t dh = c / num_heads;
  const std::size_t frames = frame_tokens.size();
  const bool guided = ctx != nullptr && ctx->guidance != nullptr && ctx->lambda > 0.0;
  const layer_guidance* g = guided ? &(*ctx->guidance)[block] : nullptr;
  attention_recorder* rec = ctx != nullptr ? ctx->recorder : nullptr;

  auto attend = [&](const matrix& q, const matrix& k, const matrix& v,
                    const condition_map* map, const size_regularizer* reg) {
    if (guided) {
      return sliced_modulated_attention(q, k, v, *map, *reg, ctx->lambda, dh,
                                        ctx->chunk_size);
    }
    return attention(q, k, v, dh);
  };

  auto run_stage = [&](const std::vector<matrix>& inputs, const std::vector<head_weights>& heads,
                       const matrix& out_proj, const matrix& keys_source, attention_kind kind) {
    const std::size_t layer = layer_index(block, kind);
    const bool record = rec != nullptr && rec->wants_layer(layer);
    std::vector<matrix> ks(num_heads), vs(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
      ks[h] = matmul(keys_source, heads[h].wk);
      vs[h] = matmul(keys_source, heads[h].wv);
    }
    std::vector<matrix> outputs(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      matrix merged(inputs[f].rows(), c, 0.0);
      matrix map_sum;
      for (std::size_t h = 0; h < num_heads; ++h) {
        const matrix q = matmul(inputs[f], heads[h].wq);
        const condition_map* map = nullptr;
        const size_regularizer* reg = nullptr;
        if (guided) {
          map = kind == attention_kind::self ? &g->self_maps[f] : &g->cross_maps[f];
          reg = kind == attention_kind::self ? &g->self_regs[f] : &g->cross_regs[f];
        }
        attention_output out = attend(q, ks[h], vs[h], map, reg);
        for (std::size_t r = 0; r < out.attended.rows(); ++r) {
          auto src = out.attended.row(r);
          auto dst = merged.row(r);
          for (std::size_t d = 0; d < dh; ++d) dst[h * dh + d] = src[d];
        }
        if (record) {
          if (h == 0) {
            map_sum = std::move(out.attention_map);
          } else {
            add_in_place(map_sum, out.attention_map);
          }
        }
      }
      if (record) {
        for (double& x : map_sum.data()) x /= static_cast<double>(num_heads);
        rec->record(layer, kind, f, grid_height, grid_width, std::move(map_sum));
      }
      matrix projected = matmul(merged, out_proj);
      add_in_place(projected, inputs[f]);  // residual
      outputs[f] = std::move(projected);
    }
    return outputs;
  };

  const matrix all_tokens = concat_rows(frame_tokens);
  std::vector<matrix> after_self = run_stage(frame_tokens, w.self_heads, w.self_out,
                                             all_tokens, attention_kind::self);
  std::vector<matrix> after_cross = run_stage(after_self, w.cross_heads, w.cross_out, text,
                                              attention_kind::cross);
  for (auto& m : after_cross) {
    matrix mixed = matmul(m, w.pointwise);
    for (double& x : mixed.data()) x = std::tanh(x);
    m = std::move(mixed);
  }
  return after_cross;
}

feature_video toy_denoiser::predict(const feature_video& z, const matrix& text,
                                    const step_context* ctx) const {
  if (z.channels != config_.channels) {
    throw shape_error("denoiser built for " + std::to_string(config_.channels) +
                      " channels, input has " + std::to_string(z.channels));
  }
  if (z.frames == 0 || z.height == 0 || z.width == 0) {
    throw shape_error("denoiser input video is empty");
  }
  if (text.cols() != config_.text_dim) {
    throw shape_error("denoiser built for text_dim " + std::to_string(config_.text_dim) +
                      ", embeddings have width " + std::to_string(text.cols()));
  }
  if (text.rows() == 0) throw validation_error("denoiser needs at least one prompt token");
  z.check_finite("denoiser input");
  if (ctx != nullptr && ctx->guidance != nullptr) {
    if (ctx->guidance->size() != num_blocks) {
      throw shape_error("guidance carries " + std::to_string(ctx->guidance->size()) +
                        " blocks, denoiser has " + std::to_string(num_blocks));
    }
    if (ctx->chunk_size == 0) throw validation_error("chunk_size must be positive");
    for (std::size_t b = 0; b < num_blocks; ++b) {
      const auto [gh, gw] = block_grid(b, z.height, z.width);
      const auto& lg = (*ctx->guidance)[b];
      if (lg.grid_height != gh || lg.grid_width != gw) {
        throw shape_error("guidance for block " + std::to_string(b) + " is " +
                          std::to_string(lg.grid_height) + "x" + std::to_string(lg.grid_width) +
                          ", block runs at " + std::to_string(gh) + "x" + std::to_string(gw));
      }
      if (lg.self_maps.size() != z.frames || lg.self_regs.size() != z.frames ||
          lg.cross_maps.size() != z.frames || lg.cross_regs.size() != z.frames) {
        throw shape_error("guidance for block " + std::to_string(b) +
                          " does not cover all frames");
      }
    }
  }

  std::vector<matrix> tokens0(z.frames);
  for (std::size_t f = 0; f < z.frames; ++f) tokens0[f] = z.frame_tokens(f);
  const std::vector<matrix> h0 = run_block(0, tokens0, text, z.height, z.width, ctx);

  feature_video h0_video = feature_video::zeros(z.frames, z.height, z.width, z.channels);
  for (std::size_t f = 0; f < z.frames; ++f) h0_video.set_frame_tokens(f, h0[f]);
  const feature_video pooled = average_pool_half(h0_video);
  std::vector<matrix> tokens1(z.frames);
  for (std::size_t f = 0; f < z.frames; ++f) tokens1[f] = pooled.frame_tokens(f);
  const std::vector<matrix> h1 = run_block(1, tokens1, text, pooled.height, pooled.width, ctx);

  feature_video h1_video = feature_video::zeros(z.frames, pooled.height, pooled.width, z.channels);
  for (std::size_t f = 0; f < z.frames; ++f) h1_video.set_frame_tokens(f, h1[f]);
  const feature_video up = upsample_nearest(h1_video, z.height, z.width);

  feature_video eps = feature_video::zeros(z.frames, z.height, z.width, z.channels);
  for (std::size_t f = 0; f < z.frames; ++f) {
    matrix sum = h0[f];
    add_in_place(sum, up.frame_tokens(f));
    matrix projected = matmul(sum, out_proj_);
    for (double& x : projected.data()) x *= config_.out_gain;
    eps.set_frame_tokens(f, projected);
  }
  eps.check_finite("denoiser output");
  return eps;
}

feature_video average_pool_half(const feature_video& v) {
  const std::size_t oh = (v.height + 1) / 2;
  const std::size_t ow = (v.width + 1) / 2;
  feature_video out = feature_video::zeros(v.frames, oh, ow, v.channels);
  for (std::size_t f = 0; f < v.frames; ++f) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        for (std::size_t ch = 0; ch < v.channels; ++ch) {
          double acc = 0.0;
          int count = 0;
          for (std::size_t dr = 0; dr < 2; ++dr) {
            for (std::size_t dc = 0; dc < 2; ++dc) {
              const std::size_t sr = 2 * r + dr;
              const std::size_t sc = 2 * c + dc;
              if (sr < v.height && sc < v.width) {
                acc += v.at(f, sr, sc, ch);
                ++count;
              }
            }
          }
          out.at(f, r, c, ch) = acc / count;
        }
      }
    }
  }
  return out;
}

feature_video upsample_nearest(const feature_video& v, std::size_t height, std::size_t width) {
  if (height < v.height || width < v.width) {
    throw validation_error("upsample target is smaller than the source grid");
  }
  feature_video out = feature_video::zeros(v.frames, height, width, v.channels);
  for (std::size_t f = 0; f < v.frames; ++f) {
    for (std::size_t r = 0; r < height; ++r) {
      const std::size_t sr = nearest_source_index(r, height, v.height);
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t sc = nearest_source_index(c, width, v.width);
        for (std::size_t ch = 0; ch < v.channels; ++ch) {
          out.at(f, r, c, ch) = v.at(f, sr, sc, ch);
        }
      }
    }
  }
  return out;
}

}  // namespace stlayout
