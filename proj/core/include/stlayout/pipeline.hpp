#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stlayout/layout.hpp"
#include "stlayout/numerics.hpp"
#include "stlayout/st_attention.hpp"

namespace stlayout {

// Dense per-token feature video, layout order (((f*H + r)*W + c)*C + ch).
struct feature_video {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  static feature_video zeros(std::size_t frames, std::size_t height, std::size_t width,
                             std::size_t channels);

  std::size_t index(std::size_t f, std::size_t r, std::size_t c, std::size_t ch) const {
    return ((f * height + r) * width + c) * channels + ch;
  }
  double& at(std::size_t f, std::size_t r, std::size_t c, std::size_t ch);
  double at(std::size_t f, std::size_t r, std::size_t c, std::size_t ch) const;

  bool same_shape(const feature_video& other) const;
  void check_finite(const char* what) const;

  // Tokens of one frame as a (height*width) x channels matrix.
  matrix frame_tokens(std::size_t frame) const;
  void set_frame_tokens(std::size_t frame, const matrix& tokens);

  bool operator==(const feature_video&) const = default;
};

// Cumulative signal-retention schedule for diffusion: alpha_bar[0] = 1 and
// alpha_bar decreases strictly to alpha_bar[steps()].
struct noise_schedule {
  std::vector<double> alpha_bar;

  std::size_t steps() const { return alpha_bar.empty() ? 0 : alpha_bar.size() - 1; }
  void validate() const;

  static noise_schedule linear_beta(std::size_t steps, double beta_start = 1e-4,
                                    double beta_end = 0.02);
};

// Deterministic per-word embeddings; the same word always maps to the same
// vector, distinct words to distinct vectors.
class text_embedder {
 public:
  text_embedder(std::uint64_t seed, std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::vector<double> embed(const std::string& word) const;

  // One row per prompt token; throws validation_error if two distinct words
  // collide to the same vector.
  matrix embed_tokens(const token_attribute_map& tokens) const;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// Attention maps retained from one (step, layer) cell of a run. Layer index is
// block * 2 + (0 for self, 1 for cross).
struct recorded_cell {
  std::size_t step = 0;
  std::size_t layer = 0;
  attention_kind kind = attention_kind::self;
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  double lambda = 0.0;
  std::vector<matrix> frame_maps;  // head-averaged, one per frame
};

struct run_report {
  std::size_t total_steps = 0;
  std::size_t active_steps = 0;
  double base_strength = 0.0;
  std::vector<std::size_t> recorded_steps;
  std::vector<std::size_t> recorded_layers;
  std::map<std::size_t, double> lambda_by_step;  // for recorded steps
  std::map<std::pair<std::size_t, std::size_t>, recorded_cell> cells;  // (step, layer)
};

// Collects head-averaged attention maps for one denoising step.
class attention_recorder {
 public:
  attention_recorder(run_report* report, std::size_t step, double lambda,
                     const std::vector<std::size_t>& layers, std::size_t frames);

  bool wants_layer(std::size_t layer) const;
  void record(std::size_t layer, attention_kind kind, std::size_t frame,
              std::size_t grid_height, std::size_t grid_width, matrix head_mean_map);

 private:
  run_report* report_;
  std::size_t step_;
  double lambda_;
  std::vector<std::size_t> layers_;
  std::size_t frames_;
};

struct denoiser_config {
  std::uint64_t seed = 1234;
  std::size_t channels = 8;   // must be divisible by the head count (2)
  std::size_t text_dim = 16;
  double out_gain = 0.05;     // keeps the predictor contraction-like
};

// Per-block guidance for one denoising step, at the block's grid resolution.
struct layer_guidance {
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  std::vector<condition_map> self_maps;        // one per frame
  std::vector<size_regularizer> self_regs;
  std::vector<condition_map> cross_maps;
  std::vector<size_regularizer> cross_regs;
};

struct step_context {
  double lambda = 0.0;
  std::size_t chunk_size = 64;
  const std::vector<layer_guidance>* guidance = nullptr;  // one entry per block
  attention_recorder* recorder = nullptr;
};

// Small fixed-topology noise predictor: two blocks of
// self-attention -> cross-attention -> pointwise tanh, the second block at
// half resolution, combined through an output projection. Weights are a pure
// function of the seed; predictions are bitwise deterministic.
class toy_denoiser {
 public:
  static constexpr std::size_t num_blocks = 2;
  static constexpr std::size_t num_heads = 2;

  explicit toy_denoiser(const denoiser_config& config);

  const denoiser_config& config() const { return config_; }

  // Grid of block `b` for an input of (height, width).
  static std::pair<std::size_t, std::size_t> block_grid(std::size_t block, std::size_t height,
                                                        std::size_t width);
  static std::size_t layer_index(std::size_t block, attention_kind kind);
  static std::size_t num_layers() { return num_blocks * 2; }

  // Predicts noise for `z` under prompt embeddings `text` (tokens x text_dim).
  // ctx == nullptr or ctx->guidance == nullptr runs plain attention.
  feature_video predict(const feature_video& z, const matrix& text,
                        const step_context* ctx) const;

 private:
  struct head_weights {
    matrix wq, wk, wv;
  };
  struct block_weights {
    std::vector<head_weights> self_heads;
    matrix self_out;
    std::vector<head_weights> cross_heads;
    matrix cross_out;
    matrix pointwise;
  };

  std::vector<matrix> run_block(std::size_t block, const std::vector<matrix>& frame_tokens,
                                const matrix& text, std::size_t grid_height,
                                std::size_t grid_width, const step_context* ctx) const;

  denoiser_config config_;
  std::vector<block_weights> blocks_;
  matrix out_proj_;
};

// Half-resolution pooling / unpooling used between the two denoiser blocks.
feature_video average_pool_half(const feature_video& v);
feature_video upsample_nearest(const feature_video& v, std::size_t height, std::size_t width);

// Latents along a deterministic inversion: trace[t] holds z_t, t = 0..steps.
struct inversion_trace {
  std::vector<feature_video> latents;

  std::size_t steps() const { return latents.empty() ? 0 : latents.size() - 1; }
  const feature_video& at_step(std::size_t t) const;
};

inversion_trace ddim_invert(const feature_video& video, const toy_denoiser& denoiser,
                            const noise_schedule& schedule, const matrix& text);

struct edit_request {
  token_attribute_map source_tokens;
  token_attribute_map target_tokens;
  std::vector<int> blend_region;  // attribute ids being edited; non-empty
  lambda_schedule schedule;

  void validate(const layout_video& layout) const;
};

struct run_options {
  std::size_t chunk_size = 64;
  size_mode mode = size_mode::key_side;
  bool blend_every_step = true;  // false blends once, after the final step
  bool record_latents = false;   // keep the latent after each step (memory-heavy)
  std::vector<std::size_t> record_steps;
  std::vector<std::size_t> record_layers;
};

struct edit_outcome {
  feature_video edited;
  run_report report;
  std::vector<feature_video> step_latents;  // end-of-step states, post-blend
};

// Replaces every token outside the blend region with the inversion latent of
// the same step, copying values bit for bit.
feature_video latent_blend(const feature_video& edited, const inversion_trace& trace,
                           const layout_video& layout, const std::vector<int>& blend_region,
                           std::size_t step);

// Denoises from the top of `trace` with layout-guided attention active in the
// early steps, blending unedited regions back from the trace.
edit_outcome denoise_with_guidance(const inversion_trace& trace, const toy_denoiser& denoiser,
                                   const noise_schedule& schedule, const layout_video& layout,
                                   const edit_request& request, const text_embedder& embedder,
                                   const run_options& options);

struct edit_result {
  feature_video edited;
  run_report report;
  inversion_trace trace;
  std::vector<feature_video> step_latents;  // filled when options.record_latents
};

// Full edit: invert under the source prompt, denoise under the target prompt
// with guidance, blend per step.
edit_result run_edit(const feature_video& source, const toy_denoiser& denoiser,
                     const noise_schedule& schedule, const layout_video& layout,
                     const edit_request& request, const text_embedder& embedder,
                     const run_options& options);

}  // namespace stlayout
