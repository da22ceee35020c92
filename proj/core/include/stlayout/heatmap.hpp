#pragma once

#include "stlayout/io.hpp"
#include "stlayout/numerics.hpp"

namespace stlayout {

// Linear rescale of a value grid to 8-bit gray: the maximum maps to 255, the
// minimum to 0, and an all-constant grid to 128 everywhere. Applying the
// mapping to an already-normalized image reproduces it.
gray_image normalize_to_gray(const matrix& values);

// Reshapes one attention-map row (length height*width) into an image.
gray_image row_to_gray(std::span<const double> row, std::size_t height, std::size_t width);

}  // namespace stlayout
