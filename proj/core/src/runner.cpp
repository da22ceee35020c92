#include "stlayout/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <nlohmann/json.hpp>

#include "stlayout/heatmap.hpp"
#include "stlayout/io.hpp"
#include "stlayout/metrics.hpp"
#include "stlayout/version.hpp"

namespace stlayout {

namespace fs = std::filesystem;

int log_level() {
  static const int level = [] {
    const char* v = std::getenv("STLAYOUT_LOG");
    if (v == nullptr) return 1;
    const std::string s(v);
    if (s == "quiet") return 0;
    if (s == "debug") return 2;
    return 1;
  }();
  return level;
}

void log_info(const std::string& message) {
  if (log_level() >= 1) std::cerr << "[stlayout] " << message << "\n";
}

void log_debug(const std::string& message) {
  if (log_level() >= 2) std::cerr << "[stlayout] " << message << "\n";
}

namespace {

std::string cell_file_stem(const char* kind, std::size_t step, std::size_t layer) {
  return std::string("heatmap_") + kind + "_s" + std::to_string(step) + "_l" +
         std::to_string(layer);
}

void write_run_heatmaps(const run_config& config, const run_report& report,
                        const layout_video& layout, const token_attribute_map& target,
                        const fs::path& out_dir, std::vector<std::string>& outputs) {
  for (const auto& [key, cell] : report.cells) {
    if (config.heatmap_frame >= layout.frames()) {
      throw config_error("key 'heatmap_frame' is " + std::to_string(config.heatmap_frame) +
                         " but the layout has " + std::to_string(layout.frames()) + " frames");
    }
    const matrix& map = cell.frame_maps[config.heatmap_frame];
    const std::size_t hw = cell.grid_height * cell.grid_width;
    if (cell.kind == attention_kind::self) {
      for (std::size_t q : config.heatmap_self_queries) {
        if (q >= hw) {
          throw config_error("key 'heatmap_self_queries' holds token " + std::to_string(q) +
                             " but layer " + std::to_string(cell.layer) + " has " +
                             std::to_string(hw) + " tokens per frame");
        }
        auto row = map.row(q);
        for (std::size_t f = 0; f < layout.frames(); ++f) {
          const gray_image img = row_to_gray(row.subspan(f * hw, hw), cell.grid_height,
                                             cell.grid_width);
          const std::string name = cell_file_stem("self", cell.step, cell.layer) + "_q" +
                                   std::to_string(q) + "_k" + std::to_string(f) + ".pgm";
          write_pgm(out_dir / name, img);
          outputs.push_back(name);
        }
      }
    } else {
      for (std::size_t b = 0; b < target.size(); ++b) {
        if (target.attribute_ids[b] <= 0) continue;
        std::vector<double> column(map.rows());
        for (std::size_t a = 0; a < map.rows(); ++a) column[a] = map(a, b);
        const gray_image img =
            row_to_gray(column, cell.grid_height, cell.grid_width);
        const std::string name =
            cell_file_stem("cross", cell.step, cell.layer) + "_tok" + std::to_string(b) + ".pgm";
        write_pgm(out_dir / name, img);
        outputs.push_back(name);
      }
    }
  }
}

void write_run_manifest(const run_config& config, const fs::path& out_dir,
                        std::vector<std::string> outputs) {
  std::sort(outputs.begin(), outputs.end());
  nlohmann::ordered_json j;
  j["tool"] = "stlayout";
  j["version"] = version_string;
  j["config_hash"] = config_hash(config);
  j["config"] = nlohmann::ordered_json::parse(run_config_to_json(config));
  j["outputs"] = outputs;
  write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace

run_products run_from_config(const run_config& config) {
  log_info("loading layout from '" + config.layout_manifest + "'");
  const layout_video layout = load_layout_manifest(config.layout_manifest);
  log_info("layout: " + std::to_string(layout.frames()) + " frames of " +
           std::to_string(layout.height()) + "x" + std::to_string(layout.width()) + ", " +
           std::to_string(layout.num_attributes()) + " attributes");

  const feature_video source = read_feature_video(config.source_video);
  if (source.frames != layout.frames() || source.height != layout.height() ||
      source.width != layout.width()) {
    throw validation_error("source video grid " + std::to_string(source.frames) + "x" +
                           std::to_string(source.height) + "x" + std::to_string(source.width) +
                           " does not match the layout");
  }

  const token_attribute_map source_tokens = parse_token_map(config.source_tokens, layout);
  const token_attribute_map target_tokens = parse_token_map(config.target_tokens, layout);

  edit_request request;
  request.source_tokens = source_tokens;
  request.target_tokens = target_tokens;
  request.blend_region = config.blend_region;
  request.schedule =
      lambda_schedule{config.steps, config.active_steps, config.lambda0};
  request.validate(layout);

  // Heatmap addressing must fail here, not after the run has been paid for.
  if (config.heatmap_frame >= layout.frames()) {
    throw config_error("key 'heatmap_frame' is " + std::to_string(config.heatmap_frame) +
                       " but the layout has " + std::to_string(layout.frames()) + " frames");
  }
  for (std::size_t layer : config.record_layers) {
    if (layer % 2 != 0) continue;
    const auto [gh, gw] = toy_denoiser::block_grid(layer / 2, layout.height(), layout.width());
    for (std::size_t q : config.heatmap_self_queries) {
      if (q >= gh * gw) {
        throw config_error("key 'heatmap_self_queries' holds token " + std::to_string(q) +
                           " but layer " + std::to_string(layer) + " has " +
                           std::to_string(gh * gw) + " tokens per frame");
      }
    }
  }

  denoiser_config dcfg;
  dcfg.seed = config.denoiser_seed;
  dcfg.channels = source.channels;
  dcfg.text_dim = config.text_embed_dim;
  dcfg.out_gain = config.denoiser_out_gain;
  const toy_denoiser denoiser(dcfg);
  const text_embedder embedder(config.embedder_seed, config.text_embed_dim);
  const noise_schedule schedule = noise_schedule::linear_beta(config.steps);

  run_options options;
  options.chunk_size = config.chunk_size;
  options.mode = config.s_st_mode == "pair_min" ? size_mode::pair_min : size_mode::key_side;
  options.blend_every_step = config.blend_every_step;
  options.record_steps = config.record_steps;
  options.record_layers = config.record_layers;

  log_info("inverting " + std::to_string(config.steps) + " steps");
  const edit_result result =
      run_edit(source, denoiser, schedule, layout, request, embedder, options);
  log_info("denoising finished; writing outputs to '" + config.output_dir + "'");

  const fs::path out_dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory '" + out_dir.string() + "'");

  std::vector<std::string> outputs;
  write_feature_video(out_dir / "edited.stlv", result.edited);
  outputs.push_back("edited.stlv");

  const leakage_report metrics = metrics_from_report(result.report, layout, target_tokens);
  write_file_atomic(out_dir / "metrics.json", to_json(metrics));
  outputs.push_back("metrics.json");

  write_run_heatmaps(config, result.report, layout, target_tokens, out_dir, outputs);
  write_run_manifest(config, out_dir, outputs);

  run_products products;
  products.edited_video = out_dir / "edited.stlv";
  products.metrics = out_dir / "metrics.json";
  products.manifest = out_dir / "manifest.json";
  std::sort(outputs.begin(), outputs.end());
  products.outputs = std::move(outputs);
  return products;
}

void generate_fixture_files(const fixture_spec& spec, const fs::path& out_dir) {
  const fixture fx = generate_fixture(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory '" + out_dir.string() + "'");
  write_fixture(fx, out_dir);
  write_file_atomic(out_dir / "fixture_spec.json", fixture_spec_to_json(spec));
  log_info("fixture written to '" + out_dir.string() + "': " + std::to_string(spec.frames) +
           " frames of " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
           "x" + std::to_string(spec.channels));
}

void compare_directories(const fs::path& dir_first, const fs::path& dir_second,
                         const fs::path& out_dir) {
  const leakage_report first = parse_leakage_report(read_file(dir_first / "metrics.json"));
  const leakage_report second = parse_leakage_report(read_file(dir_second / "metrics.json"));
  const comparison_summary summary = compare_runs(first, second);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory '" + out_dir.string() + "'");
  write_file_atomic(out_dir / "comparison.json", to_json(summary));

  // Signed per-pixel differences for heatmaps both runs produced: 128 means
  // unchanged, brighter means the second run put more mass there.
  std::vector<std::string> names;
  if (fs::is_directory(dir_first)) {
    for (const auto& entry : fs::directory_iterator(dir_first)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (name.size() > 4 && name.substr(name.size() - 4) == ".pgm" &&
          fs::exists(dir_second / name)) {
        names.push_back(name);
      }
    }
  }
  std::sort(names.begin(), names.end());
  for (const std::string& name : names) {
    const gray_image a = read_pgm(dir_first / name);
    const gray_image b = read_pgm(dir_second / name);
    if (a.height != b.height || a.width != b.width) continue;
    gray_image delta;
    delta.height = a.height;
    delta.width = a.width;
    delta.pixels.resize(a.pixels.size());
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      const int d = 128 + (static_cast<int>(b.pixels[i]) - static_cast<int>(a.pixels[i])) / 2;
      delta.pixels[i] = static_cast<std::uint8_t>(std::clamp(d, 0, 255));
    }
    write_pgm(out_dir / ("delta_" + name), delta);
  }
  log_info("comparison written to '" + out_dir.string() + "' (" +
           std::to_string(summary.self_entries) + " self entries, " +
           std::to_string(summary.cross_entries) + " cross entries)");
}

}  // namespace stlayout
