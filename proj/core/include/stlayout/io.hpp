#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stlayout/layout.hpp"
#include "stlayout/pipeline.hpp"

namespace stlayout {

// Writes via a sibling temp file + rename, so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

// 8-bit binary PGM (P5, maxval <= 255; 16-bit rasters are rejected). Pixels
// are attribute labels when used for layouts.
struct gray_image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const gray_image&) const = default;
};

gray_image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const gray_image& image);

// A layout manifest is a text file holding one PGM path per line (relative
// paths resolve against the manifest's directory), in frame order.
layout_video load_layout_manifest(const std::filesystem::path& manifest_path);

// Writes frame PGMs plus the manifest listing them; returns the manifest path.
std::filesystem::path write_layout(const layout_video& layout,
                                   const std::filesystem::path& directory,
                                   const std::string& basename);

// Feature container: magic "STLV", little-endian u32 version, u32 dimensions,
// then f64 samples in (((frame*H + r)*W + c)*C + ch) order. Version 1 holds
// one video (N, H, W, C); version 2 a step-indexed sequence (S, N, H, W, C).
feature_video read_feature_video(const std::filesystem::path& path);
void write_feature_video(const std::filesystem::path& path, const feature_video& video);

std::vector<feature_video> read_feature_sequence(const std::filesystem::path& path);
void write_feature_sequence(const std::filesystem::path& path,
                            const std::vector<feature_video>& videos);

}  // namespace stlayout
