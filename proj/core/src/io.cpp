#include "stlayout/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace stlayout {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw io_error("failed to move '" + tmp.string() + "' into place: " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("failed reading '" + path.string() + "'");
  return bytes;
}

namespace {

bool is_pgm_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Skips whitespace and '#' comment lines between header tokens.
std::size_t skip_pgm_filler(const std::string& data, std::size_t pos, const fs::path& path) {
  while (pos < data.size()) {
    if (is_pgm_space(data[pos])) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      return pos;
    }
  }
  throw io_error("'" + path.string() + "' ends inside the PGM header");
}

std::size_t read_pgm_number(const std::string& data, std::size_t& pos, const fs::path& path) {
  pos = skip_pgm_filler(data, pos, path);
  if (data[pos] < '0' || data[pos] > '9') {
    throw io_error("'" + path.string() + "' has a malformed PGM header");
  }
  std::size_t value = 0;
  while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
    value = value * 10 + static_cast<std::size_t>(data[pos] - '0');
    if (value > 1u << 24) throw io_error("'" + path.string() + "' PGM header value too large");
    ++pos;
  }
  return value;
}

void append_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const std::string& data, std::size_t& pos, const fs::path& path) {
  if (pos + 4 > data.size()) throw io_error("'" + path.string() + "' is truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | static_cast<std::uint8_t>(data[pos + static_cast<std::size_t>(i)]);
  }
  pos += 4;
  return v;
}

void append_f64_le(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f64_le(const std::string& data, std::size_t& pos, const fs::path& path) {
  if (pos + 8 > data.size()) throw io_error("'" + path.string() + "' is truncated");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<std::uint8_t>(data[pos + static_cast<std::size_t>(i)]);
  }
  pos += 8;
  return std::bit_cast<double>(bits);
}

constexpr char feature_magic[4] = {'S', 'T', 'L', 'V'};

void check_feature_magic(const std::string& data, std::size_t& pos, const fs::path& path) {
  if (data.size() < 4 || data[0] != feature_magic[0] || data[1] != feature_magic[1] ||
      data[2] != feature_magic[2] || data[3] != feature_magic[3]) {
    throw io_error("'" + path.string() + "' is not a feature container (bad magic)");
  }
  pos = 4;
}

feature_video read_video_body(const std::string& data, std::size_t& pos, const fs::path& path,
                              std::size_t frames, std::size_t height, std::size_t width,
                              std::size_t channels) {
  feature_video v = feature_video::zeros(frames, height, width, channels);
  for (double& x : v.data) {
    x = read_f64_le(data, pos, path);
    if (!std::isfinite(x)) {
      throw numeric_error("'" + path.string() + "' holds a non-finite feature value");
    }
  }
  return v;
}

void check_dims(const fs::path& path, std::size_t frames, std::size_t height, std::size_t width,
                std::size_t channels) {
  if (frames == 0 || height == 0 || width == 0 || channels == 0) {
    throw io_error("'" + path.string() + "' declares an empty video");
  }
  const std::uint64_t total = static_cast<std::uint64_t>(frames) * height * width * channels;
  if (total > (1ull << 31)) {
    throw io_error("'" + path.string() + "' declares an implausibly large video");
  }
}

}  // namespace

gray_image read_pgm(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = skip_pgm_filler(data, 0, path);
  if (pos + 2 > data.size() || data[pos] != 'P' || data[pos + 1] != '5') {
    throw io_error("'" + path.string() + "' is not a binary PGM (P5)");
  }
  pos += 2;
  const std::size_t width = read_pgm_number(data, pos, path);
  const std::size_t height = read_pgm_number(data, pos, path);
  const std::size_t maxval = read_pgm_number(data, pos, path);
  if (width == 0 || height == 0) throw io_error("'" + path.string() + "' has empty dimensions");
  if (maxval > 255) {
    throw io_error("'" + path.string() + "' is a 16-bit PGM; only 8-bit rasters are supported");
  }
  if (maxval == 0) throw io_error("'" + path.string() + "' declares maxval 0");
  if (pos >= data.size() || !is_pgm_space(data[pos])) {
    throw io_error("'" + path.string() + "' has a malformed PGM header");
  }
  ++pos;  // single whitespace separates header and raster
  gray_image img;
  img.height = height;
  img.width = width;
  if (data.size() - pos < height * width) {
    throw io_error("'" + path.string() + "' raster is truncated");
  }
  img.pixels.resize(height * width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(data[pos + i]);
  }
  return img;
}

void write_pgm(const fs::path& path, const gray_image& image) {
  if (image.height == 0 || image.width == 0) {
    throw validation_error("cannot write an empty image");
  }
  if (image.pixels.size() != image.height * image.width) {
    throw shape_error("image carries " + std::to_string(image.pixels.size()) + " pixels for " +
                      std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  std::string out;
  out.reserve(image.pixels.size() + 32);
  out += "P5\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  for (std::uint8_t p : image.pixels) out.push_back(static_cast<char>(p));
  write_file_atomic(path, out);
}

layout_video load_layout_manifest(const fs::path& manifest_path) {
  const std::string text = read_file(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::vector<label_frame> frames;
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    std::string line = text.substr(line_start, line_end - line_start);
    line_start = line_end + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    std::size_t first = 0;
    while (first < line.size() && (line[first] == ' ' || line[first] == '\t')) ++first;
    line = line.substr(first);
    if (line.empty()) continue;
    const fs::path frame_path = fs::path(line).is_absolute() ? fs::path(line) : base / line;
    const gray_image img = read_pgm(frame_path);
    frames.push_back(label_frame{img.height, img.width, img.pixels});
  }
  if (frames.empty()) {
    throw io_error("manifest '" + manifest_path.string() + "' lists no frames");
  }
  return layout_video::load(std::move(frames));
}

std::filesystem::path write_layout(const layout_video& layout, const fs::path& directory,
                                   const std::string& basename) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw io_error("cannot create directory '" + directory.string() + "'");
  std::string manifest;
  for (std::size_t f = 0; f < layout.frames(); ++f) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03zu.pgm", basename.c_str(), f);
    gray_image img;
    img.height = layout.height();
    img.width = layout.width();
    img.pixels.resize(img.height * img.width);
    for (std::size_t r = 0; r < img.height; ++r) {
      for (std::size_t c = 0; c < img.width; ++c) {
        img.pixels[r * img.width + c] = layout.label(f, r, c);
      }
    }
    write_pgm(directory / name, img);
    manifest += name;
    manifest += '\n';
  }
  const fs::path manifest_path = directory / (basename + ".manifest");
  write_file_atomic(manifest_path, manifest);
  return manifest_path;
}

feature_video read_feature_video(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  check_feature_magic(data, pos, path);
  const std::uint32_t version = read_u32_le(data, pos, path);
  if (version != 1) {
    throw io_error("'" + path.string() + "' has container version " + std::to_string(version) +
                   ", expected 1 (single video)");
  }
  const std::size_t frames = read_u32_le(data, pos, path);
  const std::size_t height = read_u32_le(data, pos, path);
  const std::size_t width = read_u32_le(data, pos, path);
  const std::size_t channels = read_u32_le(data, pos, path);
  check_dims(path, frames, height, width, channels);
  const std::size_t expected = pos + frames * height * width * channels * 8;
  if (data.size() != expected) {
    throw io_error("'" + path.string() + "' payload size mismatch: have " +
                   std::to_string(data.size()) + " bytes, expected " + std::to_string(expected));
  }
  return read_video_body(data, pos, path, frames, height, width, channels);
}

void write_feature_video(const fs::path& path, const feature_video& video) {
  if (video.data.size() != video.frames * video.height * video.width * video.channels) {
    throw shape_error("feature video data does not match its dimensions");
  }
  video.check_finite("feature video write");
  std::string out;
  out.reserve(24 + video.data.size() * 8);
  out.append(feature_magic, 4);
  append_u32_le(out, 1);
  append_u32_le(out, static_cast<std::uint32_t>(video.frames));
  append_u32_le(out, static_cast<std::uint32_t>(video.height));
  append_u32_le(out, static_cast<std::uint32_t>(video.width));
  append_u32_le(out, static_cast<std::uint32_t>(video.channels));
  for (double d : video.data) append_f64_le(out, d);
  write_file_atomic(path, out);
}

std::vector<feature_video> read_feature_sequence(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  check_feature_magic(data, pos, path);
  const std::uint32_t version = read_u32_le(data, pos, path);
  if (version != 2) {
    throw io_error("'" + path.string() + "' has container version " + std::to_string(version) +
                   ", expected 2 (step sequence)");
  }
  const std::size_t count = read_u32_le(data, pos, path);
  const std::size_t frames = read_u32_le(data, pos, path);
  const std::size_t height = read_u32_le(data, pos, path);
  const std::size_t width = read_u32_le(data, pos, path);
  const std::size_t channels = read_u32_le(data, pos, path);
  if (count == 0) throw io_error("'" + path.string() + "' declares an empty sequence");
  check_dims(path, frames, height, width, channels);
  const std::size_t expected = pos + count * frames * height * width * channels * 8;
  if (data.size() != expected) {
    throw io_error("'" + path.string() + "' payload size mismatch: have " +
                   std::to_string(data.size()) + " bytes, expected " + std::to_string(expected));
  }
  std::vector<feature_video> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(read_video_body(data, pos, path, frames, height, width, channels));
  }
  return out;
}

void write_feature_sequence(const fs::path& path, const std::vector<feature_video>& videos) {
  if (videos.empty()) throw validation_error("cannot write an empty feature sequence");
  for (const auto& v : videos) {
    if (!v.same_shape(videos[0])) {
      throw shape_error("all videos in a sequence must share one shape");
    }
    v.check_finite("feature sequence write");
  }
  std::string out;
  out.reserve(28 + videos.size() * videos[0].data.size() * 8);
  out.append(feature_magic, 4);
  append_u32_le(out, 2);
  append_u32_le(out, static_cast<std::uint32_t>(videos.size()));
  append_u32_le(out, static_cast<std::uint32_t>(videos[0].frames));
  append_u32_le(out, static_cast<std::uint32_t>(videos[0].height));
  append_u32_le(out, static_cast<std::uint32_t>(videos[0].width));
  append_u32_le(out, static_cast<std::uint32_t>(videos[0].channels));
  for (const auto& v : videos) {
    for (double d : v.data) append_f64_le(out, d);
  }
  write_file_atomic(path, out);
}

}  // namespace stlayout
