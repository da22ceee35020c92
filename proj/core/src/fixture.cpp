#include "stlayout/fixture.hpp"

#include <cmath>

#include "stlayout/io.hpp"
#include "stlayout/rng.hpp"

namespace stlayout {

namespace {

constexpr std::uint64_t signature_salt = 0x5166a7u;
constexpr std::uint64_t noise_salt = 0x7015eu;

bool inside_ellipse(double r, double c, double center_r, double center_c, double radius_r,
                    double radius_c) {
  const double dr = (r - center_r) / radius_r;
  const double dc = (c - center_c) / radius_c;
  return dr * dr + dc * dc <= 1.0;
}

}  // namespace

void fixture_spec::validate() const {
  if (frames == 0 || height == 0 || width == 0 || channels == 0) {
    throw validation_error("fixture dimensions must be positive");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw validation_error("fixture noise must be finite and non-negative");
  }
  if (shapes.empty()) throw validation_error("fixture needs at least one shape");

  int max_attr = 0;
  std::vector<bool> present(256, false);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const shape_spec& s = shapes[i];
    if (s.kind != "rect" && s.kind != "ellipse") {
      throw validation_error("shape " + std::to_string(i) + " has unknown kind '" + s.kind +
                             "' (use rect or ellipse)");
    }
    if (s.attribute < 1 || s.attribute > 255) {
      throw validation_error("shape " + std::to_string(i) + " attribute must be in 1..255");
    }
    if (s.shape_height == 0 || s.shape_width == 0) {
      throw validation_error("shape " + std::to_string(i) + " has an empty box");
    }
    present[static_cast<std::size_t>(s.attribute)] = true;
    if (s.attribute > max_attr) max_attr = s.attribute;
    for (std::size_t f = 0; f < frames; ++f) {
      const std::int64_t fi = static_cast<std::int64_t>(f);
      const std::int64_t top = s.top + fi * s.velocity_row;
      const std::int64_t left = s.left + fi * s.velocity_col;
      if (top < 0 || left < 0 ||
          top + static_cast<std::int64_t>(s.shape_height) > static_cast<std::int64_t>(height) ||
          left + static_cast<std::int64_t>(s.shape_width) > static_cast<std::int64_t>(width)) {
        throw validation_error("shape " + std::to_string(i) + " leaves the canvas at frame " +
                               std::to_string(f));
      }
    }
  }
  for (int id = 1; id <= max_attr; ++id) {
    if (!present[static_cast<std::size_t>(id)]) {
      throw validation_error("shape attributes must form a gap-free range 1..n; id " +
                             std::to_string(id) + " is unused");
    }
  }
}

fixture generate_fixture(const fixture_spec& spec) {
  spec.validate();

  std::vector<label_frame> frames(spec.frames);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    label_frame& fr = frames[f];
    fr.height = spec.height;
    fr.width = spec.width;
    fr.labels.assign(spec.height * spec.width, 0);
    for (const shape_spec& s : spec.shapes) {
      const std::int64_t fi = static_cast<std::int64_t>(f);
      const auto top = static_cast<std::size_t>(s.top + fi * s.velocity_row);
      const auto left = static_cast<std::size_t>(s.left + fi * s.velocity_col);
      const double center_r = static_cast<double>(top) +
                              (static_cast<double>(s.shape_height) - 1.0) / 2.0;
      const double center_c = static_cast<double>(left) +
                              (static_cast<double>(s.shape_width) - 1.0) / 2.0;
      const double radius_r = static_cast<double>(s.shape_height) / 2.0;
      const double radius_c = static_cast<double>(s.shape_width) / 2.0;
      for (std::size_t r = top; r < top + s.shape_height; ++r) {
        for (std::size_t c = left; c < left + s.shape_width; ++c) {
          if (s.kind == "ellipse" &&
              !inside_ellipse(static_cast<double>(r), static_cast<double>(c), center_r,
                              center_c, radius_r, radius_c)) {
            continue;
          }
          fr.labels[r * spec.width + c] = static_cast<std::uint8_t>(s.attribute);
        }
      }
    }
  }

  fixture fx{layout_video::load(std::move(frames)),
             feature_video::zeros(spec.frames, spec.height, spec.width, spec.channels)};

  // Features: a stable per-(attribute, channel) signature in [0.2, 1.0) plus
  // coordinate-addressed jitter, both pure functions of the seed.
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < spec.width; ++c) {
        const std::uint8_t label = fx.layout.label(f, r, c);
        for (std::size_t ch = 0; ch < spec.channels; ++ch) {
          const double sig =
              0.2 + 0.8 * hashed_unit(spec.seed, {signature_salt, label, ch});
          const double jitter =
              (2.0 * hashed_unit(spec.seed, {noise_salt, f, r, c, ch}) - 1.0) * spec.noise;
          fx.features.at(f, r, c, ch) = sig + jitter;
        }
      }
    }
  }
  return fx;
}

void write_fixture(const fixture& fx, const std::filesystem::path& directory) {
  write_layout(fx.layout, directory, "layout");
  write_feature_video(directory / "source.stlv", fx.features);
}

fixture_spec standard_fixture_spec() {
  fixture_spec spec;
  spec.frames = 8;
  spec.height = 16;
  spec.width = 16;
  spec.channels = 8;
  spec.seed = 42;
  spec.noise = 0.05;
  shape_spec box;
  box.kind = "rect";
  box.attribute = 1;
  box.top = 3;
  box.left = 1;
  box.shape_height = 5;
  box.shape_width = 4;
  box.velocity_row = 0;
  box.velocity_col = 1;
  shape_spec blob;
  blob.kind = "ellipse";
  blob.attribute = 2;
  blob.top = 9;
  blob.left = 10;
  blob.shape_height = 5;
  blob.shape_width = 5;
  blob.velocity_row = 0;
  blob.velocity_col = -1;
  spec.shapes = {box, blob};
  return spec;
}

}  // namespace stlayout
