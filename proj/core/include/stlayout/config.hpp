#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stlayout/fixture.hpp"
#include "stlayout/pipeline.hpp"

namespace stlayout {

// Flat run configuration. Unknown keys are rejected; optional keys fall back
// to the defaults below.
struct run_config {
  // required
  std::string layout_manifest;
  std::string source_video;
  std::string output_dir;
  std::vector<std::pair<std::string, int>> source_tokens;
  std::vector<std::pair<std::string, int>> target_tokens;
  std::vector<int> blend_region;

  // optional
  std::size_t steps = 50;
  std::size_t active_steps = 15;
  double lambda0 = 1.0;
  std::uint64_t denoiser_seed = 1234;
  std::uint64_t embedder_seed = 5678;
  std::size_t text_embed_dim = 16;
  double denoiser_out_gain = 0.05;
  std::string s_st_mode = "key";  // "key" | "pair_min"
  std::size_t chunk_size = 64;
  bool blend_every_step = true;
  std::vector<std::size_t> record_steps{0, 5, 10, 14};
  std::vector<std::size_t> record_layers{0, 1, 2, 3};
  std::size_t heatmap_frame = 0;
  std::vector<std::size_t> heatmap_self_queries;

  bool operator==(const run_config&) const = default;
};

run_config parse_run_config(const std::string& json_text);
run_config load_run_config(const std::filesystem::path& path);

// Canonical JSON for a config with every default resolved; parsing it back
// yields an equal struct.
std::string run_config_to_json(const run_config& config);

// FNV-1a of the canonical form, as 16 hex digits.
std::string config_hash(const run_config& config);

fixture_spec parse_fixture_spec(const std::string& json_text);
fixture_spec load_fixture_spec(const std::filesystem::path& path);
std::string fixture_spec_to_json(const fixture_spec& spec);

}  // namespace stlayout
