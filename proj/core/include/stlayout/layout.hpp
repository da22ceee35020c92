#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stlayout/errors.hpp"

namespace stlayout {

// One frame of attribute labels; value 0 is background, 1..num_attributes are
// foreground attributes.
struct label_frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;  // row-major, height*width entries

  std::uint8_t at(std::size_t r, std::size_t c) const;
};

// Per-video token addressing: flat index = (frame*height + row)*width + col.
struct token_grid {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t tokens_per_frame() const { return height * width; }
  std::size_t total_tokens() const { return frames * height * width; }
  std::size_t flat_index(std::size_t frame, std::size_t row, std::size_t col) const;
};

struct token_coords {
  std::size_t frame = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const token_coords&) const = default;
};

token_coords unflatten(const token_grid& grid, std::size_t flat_index);

// Attribute label video. `load` enforces that attribute ids form a gap-free
// range 1..num_attributes across the whole video; rasters produced by
// downsampling may legitimately lose an id and go through `derived`.
class layout_video {
 public:
  static layout_video load(std::vector<label_frame> frames);
  static layout_video derived(std::vector<label_frame> frames, int num_attributes);

  std::size_t frames() const { return grid_.frames; }
  std::size_t height() const { return grid_.height; }
  std::size_t width() const { return grid_.width; }
  int num_attributes() const { return num_attributes_; }
  const token_grid& grid() const { return grid_; }

  std::uint8_t label(std::size_t frame, std::size_t row, std::size_t col) const;
  std::uint8_t label_at_token(std::size_t flat_index) const;
  const std::vector<std::uint8_t>& flat_labels() const { return labels_; }

 private:
  layout_video() = default;
  token_grid grid_;
  int num_attributes_ = 0;
  std::vector<std::uint8_t> labels_;  // token-grid order
};

// Attribute id of a token addressed by flat index.
int attribute_of(const layout_video& layout, std::size_t flat_index);

// proportions[id] = fraction of all tokens carrying id, id in 0..num_attributes.
struct attribute_areas {
  std::vector<double> proportions;
};

attribute_areas compute_areas(const layout_video& layout);

// Prompt tokens paired with attribute ids; id 0 marks tokens bound to no
// attribute (articles, prepositions, ...).
struct token_attribute_map {
  std::vector<std::string> words;
  std::vector<int> attribute_ids;

  std::size_t size() const { return attribute_ids.size(); }
  bool operator==(const token_attribute_map&) const = default;
};

// Validates ids against the layout: every id is in 0..num_attributes and at
// least one token is bound to a foreground attribute.
token_attribute_map parse_token_map(const std::vector<std::pair<std::string, int>>& tokens,
                                    const layout_video& layout);

// Source index a destination cell samples from under nearest-neighbor
// resampling; shared by every resolution change in the library.
std::size_t nearest_source_index(std::size_t dst, std::size_t dst_size, std::size_t src_size);

// Nearest-neighbor downsample of every frame to (height, width).
layout_video downsample_nearest(const layout_video& layout, std::size_t height,
                                std::size_t width);

}  // namespace stlayout
