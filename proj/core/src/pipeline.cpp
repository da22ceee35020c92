#include "stlayout/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>

#include "stlayout/rng.hpp"

namespace stlayout {

feature_video feature_video::zeros(std::size_t frames, std::size_t height, std::size_t width,
                                   std::size_t channels) {
  feature_video v;
  v.frames = frames;
  v.height = height;
  v.width = width;
  v.channels = channels;
  v.data.assign(frames * height * width * channels, 0.0);
  return v;
}

double& feature_video::at(std::size_t f, std::size_t r, std::size_t c, std::size_t ch) {
  if (f >= frames || r >= height || c >= width || ch >= channels) {
    throw bounds_error("feature index (" + std::to_string(f) + "," + std::to_string(r) + "," +
                       std::to_string(c) + "," + std::to_string(ch) + ") outside video");
  }
  return data[index(f, r, c, ch)];
}

double feature_video::at(std::size_t f, std::size_t r, std::size_t c, std::size_t ch) const {
  return const_cast<feature_video*>(this)->at(f, r, c, ch);
}

bool feature_video::same_shape(const feature_video& other) const {
  return frames == other.frames && height == other.height && width == other.width &&
         channels == other.channels;
}

void feature_video::check_finite(const char* what) const {
  for (double v : data) {
    if (!std::isfinite(v)) throw numeric_error(std::string(what) + ": non-finite value");
  }
}

matrix feature_video::frame_tokens(std::size_t frame) const {
  if (frame >= frames) {
    throw bounds_error("frame " + std::to_string(frame) + " outside video with " +
                       std::to_string(frames) + " frames");
  }
  const std::size_t hw = height * width;
  matrix out(hw, channels, 0.0);
  const std::size_t base = frame * hw * channels;
  for (std::size_t i = 0; i < hw * channels; ++i) out.data()[i] = data[base + i];
  return out;
}

void feature_video::set_frame_tokens(std::size_t frame, const matrix& tokens) {
  if (frame >= frames) {
    throw bounds_error("frame " + std::to_string(frame) + " outside video with " +
                       std::to_string(frames) + " frames");
  }
  if (tokens.rows() != height * width || tokens.cols() != channels) {
    throw shape_error("frame tokens are " + std::to_string(tokens.rows()) + "x" +
                      std::to_string(tokens.cols()) + ", video frames need " +
                      std::to_string(height * width) + "x" + std::to_string(channels));
  }
  const std::size_t base = frame * height * width * channels;
  for (std::size_t i = 0; i < tokens.size(); ++i) data[base + i] = tokens.data()[i];
}

void noise_schedule::validate() const {
  if (alpha_bar.size() < 2) throw validation_error("noise schedule needs at least one step");
  if (alpha_bar[0] != 1.0) {
    throw validation_error("noise schedule must start at alpha_bar = 1");
  }
  for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
    const double v = alpha_bar[t];
    if (!std::isfinite(v) || v <= 0.0 || v > 1.0) {
      throw validation_error("alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
    }
    if (t > 0 && !(v < alpha_bar[t - 1])) {
      throw validation_error("alpha_bar must decrease strictly, violated at step " +
                             std::to_string(t));
    }
  }
}

noise_schedule noise_schedule::linear_beta(std::size_t steps, double beta_start,
                                           double beta_end) {
  if (steps == 0) throw validation_error("noise schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
    throw validation_error("linear beta schedule needs 0 < beta_start <= beta_end < 1");
  }
  noise_schedule out;
  out.alpha_bar.resize(steps + 1);
  out.alpha_bar[0] = 1.0;
  double acc = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0
                                   : static_cast<double>(t) / static_cast<double>(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    acc *= 1.0 - beta;
    out.alpha_bar[t + 1] = acc;
  }
  out.validate();
  return out;
}

text_embedder::text_embedder(std::uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {
  if (dim == 0) throw validation_error("text embedding dimension must be positive");
}

std::vector<double> text_embedder::embed(const std::string& word) const {
  rng r(hash_combine(splitmix64(seed_), fnv1a64(word)));
  std::vector<double> v(dim_);
  double norm = 0.0;
  for (double& x : v) {
    x = r.next_in(-1.0, 1.0);
    norm += x * x;
  }
  if (norm == 0.0) throw numeric_error("text embedding for '" + word + "' is all zero");
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

matrix text_embedder::embed_tokens(const token_attribute_map& tokens) const {
  if (tokens.size() == 0) throw validation_error("cannot embed an empty token map");
  matrix out(tokens.size(), dim_, 0.0);
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    const auto v = embed(tokens.words[b]);
    for (std::size_t d = 0; d < dim_; ++d) out(b, d) = v[d];
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = i + 1; j < tokens.size(); ++j) {
      if (tokens.words[i] == tokens.words[j]) continue;
      bool equal = true;
      for (std::size_t d = 0; d < dim_ && equal; ++d) equal = out(i, d) == out(j, d);
      if (equal) {
        throw validation_error("text embeddings collide for '" + tokens.words[i] + "' and '" +
                               tokens.words[j] + "'");
      }
    }
  }
  return out;
}

attention_recorder::attention_recorder(run_report* report, std::size_t step, double lambda,
                                       const std::vector<std::size_t>& layers,
                                       std::size_t frames)
    : report_(report), step_(step), lambda_(lambda), layers_(layers), frames_(frames) {}

bool attention_recorder::wants_layer(std::size_t layer) const {
  return std::find(layers_.begin(), layers_.end(), layer) != layers_.end();
}

void attention_recorder::record(std::size_t layer, attention_kind kind, std::size_t frame,
                                std::size_t grid_height, std::size_t grid_width,
                                matrix head_mean_map) {
  if (!wants_layer(layer)) return;
  if (frame >= frames_) throw bounds_error("recorded frame outside the run");
  auto& cell = report_->cells[{step_, layer}];
  if (cell.frame_maps.empty()) {
    cell.step = step_;
    cell.layer = layer;
    cell.kind = kind;
    cell.grid_height = grid_height;
    cell.grid_width = grid_width;
    cell.lambda = lambda_;
    cell.frame_maps.resize(frames_);
  } else if (cell.kind != kind || cell.grid_height != grid_height ||
             cell.grid_width != grid_width) {
    throw validation_error("recorded cell geometry changed within one step");
  }
  cell.frame_maps[frame] = std::move(head_mean_map);
}

const feature_video& inversion_trace::at_step(std::size_t t) const {
  if (t >= latents.size()) {
    throw validation_error("inversion trace holds steps 0.." + std::to_string(steps()) +
                           "; step " + std::to_string(t) + " is missing");
  }
  return latents[t];
}

namespace {

// Shared DDIM update: reconstruct the clean estimate under `ab_from`, then
// re-noise it to `ab_to`. Both inversion and denoising are this map with the
// two levels swapped.
feature_video ddim_step(const feature_video& z, const feature_video& eps, double ab_from,
                        double ab_to) {
  const double sqrt_from = std::sqrt(ab_from);
  const double sqrt_om_from = std::sqrt(1.0 - ab_from);
  const double sqrt_to = std::sqrt(ab_to);
  const double sqrt_om_to = std::sqrt(1.0 - ab_to);
  feature_video out = z;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double clean = (z.data[i] - sqrt_om_from * eps.data[i]) / sqrt_from;
    out.data[i] = sqrt_to * clean + sqrt_om_to * eps.data[i];
  }
  out.check_finite("ddim step");
  return out;
}

}  // namespace

inversion_trace ddim_invert(const feature_video& video, const toy_denoiser& denoiser,
                            const noise_schedule& schedule, const matrix& text) {
  schedule.validate();
  video.check_finite("inversion input");
  inversion_trace trace;
  trace.latents.reserve(schedule.steps() + 1);
  trace.latents.push_back(video);
  feature_video z = video;
  for (std::size_t t = 0; t < schedule.steps(); ++t) {
    const feature_video eps = denoiser.predict(z, text, nullptr);
    z = ddim_step(z, eps, schedule.alpha_bar[t], schedule.alpha_bar[t + 1]);
    trace.latents.push_back(z);
  }
  return trace;
}

void edit_request::validate(const layout_video& layout) const {
  schedule.validate();
  if (source_tokens.size() == 0 || target_tokens.size() == 0) {
    throw validation_error("edit request needs non-empty source and target token maps");
  }
  for (const auto& map : {&source_tokens, &target_tokens}) {
    for (int id : map->attribute_ids) {
      if (id < 0 || id > layout.num_attributes()) {
        throw validation_error("token map names attribute " + std::to_string(id) +
                               " outside the layout's ids 0.." +
                               std::to_string(layout.num_attributes()));
      }
    }
  }
  if (blend_region.empty()) throw validation_error("blend region is empty");
  for (int id : blend_region) {
    if (id < 0 || id > layout.num_attributes()) {
      throw validation_error("blend region names attribute " + std::to_string(id) +
                             " outside the layout's ids 0.." +
                             std::to_string(layout.num_attributes()));
    }
  }
}

feature_video latent_blend(const feature_video& edited, const inversion_trace& trace,
                           const layout_video& layout, const std::vector<int>& blend_region,
                           std::size_t step) {
  const feature_video& source = trace.at_step(step);
  if (!source.same_shape(edited)) {
    throw shape_error("latent blend: edited video and trace latents disagree in shape");
  }
  if (edited.frames != layout.frames() || edited.height != layout.height() ||
      edited.width != layout.width()) {
    throw shape_error("latent blend: layout does not match the video grid");
  }
  if (blend_region.empty()) throw validation_error("blend region is empty");
  std::vector<bool> edited_id(static_cast<std::size_t>(layout.num_attributes()) + 1, false);
  for (int id : blend_region) {
    if (id < 0 || id > layout.num_attributes()) {
      throw validation_error("blend region names attribute " + std::to_string(id) +
                             " outside the layout's ids");
    }
    edited_id[static_cast<std::size_t>(id)] = true;
  }

  feature_video out = edited;
  for (std::size_t f = 0; f < edited.frames; ++f) {
    for (std::size_t r = 0; r < edited.height; ++r) {
      for (std::size_t c = 0; c < edited.width; ++c) {
        if (edited_id[layout.label(f, r, c)]) continue;
        const std::size_t base = out.index(f, r, c, 0);
        for (std::size_t ch = 0; ch < edited.channels; ++ch) {
          out.data[base + ch] = source.data[base + ch];
        }
      }
    }
  }
  return out;
}

namespace {

std::vector<layer_guidance> build_guidance(const layout_video& layout,
                                           const token_attribute_map& target_tokens,
                                           size_mode mode) {
  std::vector<layer_guidance> out(toy_denoiser::num_blocks);
  for (std::size_t b = 0; b < toy_denoiser::num_blocks; ++b) {
    const auto [gh, gw] = toy_denoiser::block_grid(b, layout.height(), layout.width());
    const layout_video scaled = (gh == layout.height() && gw == layout.width())
                                    ? layout
                                    : downsample_nearest(layout, gh, gw);
    const attribute_areas areas = compute_areas(scaled);
    layer_guidance& lg = out[b];
    lg.grid_height = gh;
    lg.grid_width = gw;
    for (std::size_t f = 0; f < scaled.frames(); ++f) {
      condition_map self_map = build_self_condition_map(scaled, f);
      lg.self_regs.push_back(build_size_regularizer(self_map, areas, scaled, nullptr, mode));
      lg.self_maps.push_back(std::move(self_map));
      condition_map cross_map = build_cross_condition_map(scaled, f, target_tokens);
      lg.cross_regs.push_back(
          build_size_regularizer(cross_map, areas, scaled, &target_tokens, mode));
      lg.cross_maps.push_back(std::move(cross_map));
    }
  }
  return out;
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

edit_outcome denoise_with_guidance(const inversion_trace& trace, const toy_denoiser& denoiser,
                                   const noise_schedule& schedule, const layout_video& layout,
                                   const edit_request& request, const text_embedder& embedder,
                                   const run_options& options) {
  schedule.validate();
  const std::size_t total = schedule.steps();
  if (trace.steps() != total) {
    throw validation_error("inversion trace has " + std::to_string(trace.steps()) +
                           " steps, schedule has " + std::to_string(total));
  }
  request.validate(layout);
  if (request.schedule.total_steps != total) {
    throw validation_error("modulation schedule covers " +
                           std::to_string(request.schedule.total_steps) +
                           " steps, noise schedule has " + std::to_string(total));
  }
  const feature_video& top = trace.at_step(total);
  if (top.frames != layout.frames() || top.height != layout.height() ||
      top.width != layout.width()) {
    throw shape_error("layout grid does not match the latent video");
  }
  if (options.chunk_size == 0) throw validation_error("chunk_size must be positive");
  const std::vector<std::size_t> rec_steps = sorted_unique(options.record_steps);
  const std::vector<std::size_t> rec_layers = sorted_unique(options.record_layers);
  for (std::size_t s : rec_steps) {
    if (s >= total) {
      throw validation_error("record step " + std::to_string(s) + " outside run of " +
                             std::to_string(total) + " steps");
    }
  }
  for (std::size_t l : rec_layers) {
    if (l >= toy_denoiser::num_layers()) {
      throw validation_error("record layer " + std::to_string(l) + " outside denoiser with " +
                             std::to_string(toy_denoiser::num_layers()) + " layers");
    }
  }

  const matrix target_text = embedder.embed_tokens(request.target_tokens);
  const std::vector<layer_guidance> guidance =
      build_guidance(layout, request.target_tokens, options.mode);

  edit_outcome outcome;
  outcome.report.total_steps = total;
  outcome.report.active_steps = request.schedule.active_steps;
  outcome.report.base_strength = request.schedule.base_strength;
  outcome.report.recorded_steps = rec_steps;
  outcome.report.recorded_layers = rec_layers;

  feature_video z = top;
  for (std::size_t s = 0; s < total; ++s) {
    const std::size_t t = total - s;
    const double lambda = request.schedule.value_at(s);
    std::optional<attention_recorder> recorder;
    if (std::binary_search(rec_steps.begin(), rec_steps.end(), s)) {
      outcome.report.lambda_by_step[s] = lambda;
      recorder.emplace(&outcome.report, s, lambda, rec_layers, layout.frames());
    }
    step_context ctx;
    ctx.lambda = lambda;
    ctx.chunk_size = options.chunk_size;
    ctx.guidance = &guidance;
    ctx.recorder = recorder ? &*recorder : nullptr;
    const feature_video eps = denoiser.predict(z, target_text, &ctx);
    z = ddim_step(z, eps, schedule.alpha_bar[t], schedule.alpha_bar[t - 1]);
    if (options.blend_every_step) {
      z = latent_blend(z, trace, layout, request.blend_region, t - 1);
    }
    if (options.record_latents) outcome.step_latents.push_back(z);
  }
  if (!options.blend_every_step) {
    z = latent_blend(z, trace, layout, request.blend_region, 0);
    if (options.record_latents && !outcome.step_latents.empty()) {
      outcome.step_latents.back() = z;
    }
  }
  outcome.edited = std::move(z);
  return outcome;
}

edit_result run_edit(const feature_video& source, const toy_denoiser& denoiser,
                     const noise_schedule& schedule, const layout_video& layout,
                     const edit_request& request, const text_embedder& embedder,
                     const run_options& options) {
  request.validate(layout);
  const matrix source_text = embedder.embed_tokens(request.source_tokens);
  edit_result result;
  result.trace = ddim_invert(source, denoiser, schedule, source_text);
  edit_outcome outcome = denoise_with_guidance(result.trace, denoiser, schedule, layout,
                                               request, embedder, options);
  result.edited = std::move(outcome.edited);
  result.report = std::move(outcome.report);
  result.step_latents = std::move(outcome.step_latents);
  return result;
}

}  // namespace stlayout
