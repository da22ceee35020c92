#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stlayout {

// All randomness in the library flows through these helpers. Standard
// distributions are implementation-defined, so doubles are always built from
// raw engine output with the same bit mapping; results are identical across
// platforms for a given seed.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive combine for addressing one draw by coordinates.
inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// 53 mantissa bits of u mapped to [0, 1).
inline double bits_to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

class rng {
 public:
  explicit rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_bits() { return engine_(); }

  // Uniform in [0, 1).
  double next_unit() { return bits_to_unit(engine_()); }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n); n must be > 0. Modulo bias is irrelevant for
  // the small n used here and keeps the draw count per call fixed at one.
  std::uint64_t next_index(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

// Stateless, coordinate-addressed draw in [0, 1); used for fixture noise so
// every pixel value is a pure function of (seed, coordinates).
inline double hashed_unit(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t c : coords) h = hash_combine(h, c);
  return bits_to_unit(h);
}

}  // namespace stlayout
