#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stlayout/layout.hpp"
#include "stlayout/pipeline.hpp"

namespace stlayout {

// One moving shape: a box (or the inscribed ellipse) whose top-left corner
// translates by (velocity_row, velocity_col) per frame. Every frame must keep
// the box fully inside the canvas.
struct shape_spec {
  std::string kind = "rect";  // "rect" | "ellipse"
  int attribute = 1;
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::size_t shape_height = 1;
  std::size_t shape_width = 1;
  std::int64_t velocity_row = 0;
  std::int64_t velocity_col = 0;

  bool operator==(const shape_spec&) const = default;
};

struct fixture_spec {
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 8;
  std::uint64_t seed = 42;
  double noise = 0.05;  // amplitude of the per-pixel feature jitter
  std::vector<shape_spec> shapes;

  void validate() const;
  bool operator==(const fixture_spec&) const = default;
};

struct fixture {
  layout_video layout;
  feature_video features;
};

// Labels: shapes painted in list order (later shapes win overlaps) over
// background 0. Features: per-attribute channel signature plus coordinate-
// hashed noise, so identical specs synthesize identical bytes.
fixture generate_fixture(const fixture_spec& spec);

// Writes layout PGMs + manifest ("layout.manifest") and the feature video
// ("source.stlv") into the directory.
void write_fixture(const fixture& fx, const std::filesystem::path& directory);

// The two-attribute moving-shape fixture used by the examples and the
// pipeline checks: 8 frames of 16x16x8, a drifting box and a counter-moving
// ellipse.
fixture_spec standard_fixture_spec();

}  // namespace stlayout
