#include "stlayout/layout.hpp"

#include <algorithm>

namespace stlayout {

std::uint8_t label_frame::at(std::size_t r, std::size_t c) const {
  if (r >= height || c >= width) {
    throw bounds_error("label_frame index (" + std::to_string(r) + "," + std::to_string(c) +
                       ") outside " + std::to_string(height) + "x" + std::to_string(width));
  }
  return labels[r * width + c];
}

std::size_t token_grid::flat_index(std::size_t frame, std::size_t row, std::size_t col) const {
  if (frame >= frames || row >= height || col >= width) {
    throw bounds_error("token coordinates (" + std::to_string(frame) + "," +
                       std::to_string(row) + "," + std::to_string(col) + ") outside grid " +
                       std::to_string(frames) + "x" + std::to_string(height) + "x" +
                       std::to_string(width));
  }
  return (frame * height + row) * width + col;
}

token_coords unflatten(const token_grid& grid, std::size_t flat_index) {
  if (flat_index >= grid.total_tokens()) {
    throw bounds_error("token index " + std::to_string(flat_index) + " outside grid with " +
                       std::to_string(grid.total_tokens()) + " tokens");
  }
  token_coords out;
  out.col = flat_index % grid.width;
  flat_index /= grid.width;
  out.row = flat_index % grid.height;
  out.frame = flat_index / grid.height;
  return out;
}

layout_video layout_video::load(std::vector<label_frame> frames) {
  layout_video out;
  if (frames.empty()) throw validation_error("layout video has no frames");
  const std::size_t h = frames[0].height;
  const std::size_t w = frames[0].width;
  if (h == 0 || w == 0) throw shape_error("layout frames must be non-empty");
  int max_id = 0;
  std::vector<bool> present(256, false);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.height != h || fr.width != w) {
      throw shape_error("layout frame " + std::to_string(f) + " is " +
                        std::to_string(fr.height) + "x" + std::to_string(fr.width) +
                        " but frame 0 is " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (fr.labels.size() != h * w) {
      throw shape_error("layout frame " + std::to_string(f) + " carries " +
                        std::to_string(fr.labels.size()) + " labels for " +
                        std::to_string(h * w) + " pixels");
    }
    for (std::uint8_t v : fr.labels) {
      present[v] = true;
      max_id = std::max(max_id, static_cast<int>(v));
    }
  }
  if (max_id == 0) throw validation_error("layout video has no foreground attributes");
  for (int id = 1; id <= max_id; ++id) {
    if (!present[id]) {
      throw validation_error("attribute ids are not contiguous: id " + std::to_string(id) +
                             " is absent while id " + std::to_string(max_id) + " is present");
    }
  }
  out.grid_ = token_grid{frames.size(), h, w};
  out.num_attributes_ = max_id;
  out.labels_.reserve(frames.size() * h * w);
  for (const auto& fr : frames) out.labels_.insert(out.labels_.end(), fr.labels.begin(), fr.labels.end());
  return out;
}

layout_video layout_video::derived(std::vector<label_frame> frames, int num_attributes) {
  layout_video out;
  if (frames.empty()) throw validation_error("layout video has no frames");
  if (num_attributes < 1) throw validation_error("derived layout needs num_attributes >= 1");
  const std::size_t h = frames[0].height;
  const std::size_t w = frames[0].width;
  if (h == 0 || w == 0) throw shape_error("layout frames must be non-empty");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.height != h || fr.width != w || fr.labels.size() != h * w) {
      throw shape_error("derived layout frame " + std::to_string(f) + " has inconsistent shape");
    }
    for (std::uint8_t v : fr.labels) {
      if (static_cast<int>(v) > num_attributes) {
        throw validation_error("derived layout label " + std::to_string(int(v)) +
                               " exceeds num_attributes " + std::to_string(num_attributes));
      }
    }
  }
  out.grid_ = token_grid{frames.size(), h, w};
  out.num_attributes_ = num_attributes;
  out.labels_.reserve(frames.size() * h * w);
  for (const auto& fr : frames) out.labels_.insert(out.labels_.end(), fr.labels.begin(), fr.labels.end());
  return out;
}

std::uint8_t layout_video::label(std::size_t frame, std::size_t row, std::size_t col) const {
  return labels_[grid_.flat_index(frame, row, col)];
}

std::uint8_t layout_video::label_at_token(std::size_t flat_index) const {
  if (flat_index >= labels_.size()) {
    throw bounds_error("token index " + std::to_string(flat_index) + " outside layout with " +
                       std::to_string(labels_.size()) + " tokens");
  }
  return labels_[flat_index];
}

int attribute_of(const layout_video& layout, std::size_t flat_index) {
  return static_cast<int>(layout.label_at_token(flat_index));
}

attribute_areas compute_areas(const layout_video& layout) {
  attribute_areas out;
  out.proportions.assign(static_cast<std::size_t>(layout.num_attributes()) + 1, 0.0);
  const auto& labels = layout.flat_labels();
  for (std::uint8_t v : labels) out.proportions[v] += 1.0;
  const double total = static_cast<double>(labels.size());
  for (double& p : out.proportions) p /= total;
  return out;
}

token_attribute_map parse_token_map(const std::vector<std::pair<std::string, int>>& tokens,
                                    const layout_video& layout) {
  if (tokens.empty()) throw validation_error("token map is empty");
  token_attribute_map out;
  bool any_bound = false;
  for (const auto& [word, id] : tokens) {
    if (id < 0 || id > layout.num_attributes()) {
      throw validation_error("token '" + word + "' names attribute " + std::to_string(id) +
                             " but the layout has ids 0.." +
                             std::to_string(layout.num_attributes()));
    }
    if (id > 0) any_bound = true;
    out.words.push_back(word);
    out.attribute_ids.push_back(id);
  }
  if (!any_bound) {
    throw validation_error("token map binds no token to a foreground attribute");
  }
  return out;
}

std::size_t nearest_source_index(std::size_t dst, std::size_t dst_size, std::size_t src_size) {
  if (dst_size == 0 || src_size == 0) throw shape_error("nearest_source_index: empty axis");
  if (dst >= dst_size) throw bounds_error("nearest_source_index: index outside axis");
  const double center = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_size) /
                        static_cast<double>(dst_size);
  auto idx = static_cast<std::size_t>(center);
  if (idx >= src_size) idx = src_size - 1;
  return idx;
}

layout_video downsample_nearest(const layout_video& layout, std::size_t height,
                                std::size_t width) {
  if (height == 0 || width == 0) throw shape_error("downsample_nearest: empty target");
  if (height > layout.height() || width > layout.width()) {
    throw validation_error("downsample_nearest target " + std::to_string(height) + "x" +
                           std::to_string(width) + " exceeds source " +
                           std::to_string(layout.height()) + "x" +
                           std::to_string(layout.width()));
  }
  std::vector<label_frame> frames(layout.frames());
  for (std::size_t f = 0; f < layout.frames(); ++f) {
    label_frame fr;
    fr.height = height;
    fr.width = width;
    fr.labels.resize(height * width);
    for (std::size_t r = 0; r < height; ++r) {
      const std::size_t sr = nearest_source_index(r, height, layout.height());
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t sc = nearest_source_index(c, width, layout.width());
        fr.labels[r * width + c] = layout.label(f, sr, sc);
      }
    }
    frames[f] = std::move(fr);
  }
  return layout_video::derived(std::move(frames), layout.num_attributes());
}

}  // namespace stlayout
