#pragma once

#include <stdexcept>
#include <string>

namespace stlayout {

// Base for everything this library throws on purpose. The CLI maps the
// subclasses to exit codes: shape/validation/bounds/config -> 2, io -> 3,
// numeric -> 4.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands (messages carry both shapes).
struct shape_error : error {
  using error::error;
};

// Semantically invalid input: bad attribute ids, empty regions, negative
// strengths, and the like.
struct validation_error : error {
  using error::error;
};

// Index outside the addressed container.
struct bounds_error : error {
  using error::error;
};

// Bad or unknown keys / values in user-supplied configuration.
struct config_error : error {
  using error::error;
};

// Filesystem and container-format failures.
struct io_error : error {
  using error::error;
};

// Non-finite values where finite math is required.
struct numeric_error : error {
  using error::error;
};

}  // namespace stlayout
