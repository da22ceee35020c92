#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stlayout/config.hpp"

namespace stlayout {

// Verbosity comes from the STLAYOUT_LOG environment variable:
// "quiet" (errors only), "info" (default), or "debug".
int log_level();
void log_info(const std::string& message);
void log_debug(const std::string& message);

struct run_products {
  std::filesystem::path edited_video;
  std::filesystem::path metrics;
  std::filesystem::path manifest;
  std::vector<std::string> outputs;  // file names inside output_dir, sorted
};

// Executes one edit end to end: load inputs, invert, denoise with guidance,
// blend, then write edited.stlv, metrics.json, heatmaps and manifest.json
// into the config's output directory.
run_products run_from_config(const run_config& config);

// Writes layout PGMs + manifest, source.stlv and the echoed spec.
void generate_fixture_files(const fixture_spec& spec, const std::filesystem::path& out_dir);

// Compares two run output directories (first = baseline): writes
// comparison.json plus per-pixel delta images for heatmaps present in both.
void compare_directories(const std::filesystem::path& dir_first,
                         const std::filesystem::path& dir_second,
                         const std::filesystem::path& out_dir);

}  // namespace stlayout
