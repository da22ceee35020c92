#include "stlayout/heatmap.hpp"

#include <cmath>

namespace stlayout {

gray_image normalize_to_gray(const matrix& values) {
  if (values.size() == 0) throw validation_error("cannot normalize an empty grid");
  double lo = values.data()[0];
  double hi = lo;
  for (double v : values.data()) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  gray_image img;
  img.height = values.rows();
  img.width = values.cols();
  img.pixels.resize(values.size());
  if (hi == lo) {
    for (auto& p : img.pixels) p = 128;
    return img;
  }
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto level = std::llround((values.data()[i] - lo) * scale);
    img.pixels[i] = static_cast<std::uint8_t>(level);
  }
  return img;
}

gray_image row_to_gray(std::span<const double> row, std::size_t height, std::size_t width) {
  if (row.size() != height * width) {
    throw shape_error("attention row of length " + std::to_string(row.size()) +
                      " cannot fill a " + std::to_string(height) + "x" + std::to_string(width) +
                      " image");
  }
  matrix m(height, width, std::vector<double>(row.begin(), row.end()));
  return normalize_to_gray(m);
}

}  // namespace stlayout
