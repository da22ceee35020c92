#include "stlayout/config.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "stlayout/io.hpp"
#include "stlayout/rng.hpp"

namespace stlayout {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

json parse_text(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw config_error(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw config_error(std::string(what) + " has unknown key '" + key + "'");
  }
}

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const json& require(const json& j, const char* key, const char* what) {
  const json* v = find(j, key);
  if (v == nullptr) {
    throw config_error(std::string(what) + " is missing required key '" + key + "'");
  }
  return *v;
}

std::string get_string(const json& v, const char* key) {
  if (!v.is_string()) throw config_error(std::string("key '") + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t get_uint(const json& v, const char* key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw config_error(std::string("key '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const json& v, const char* key) {
  if (!v.is_number()) throw config_error(std::string("key '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw config_error(std::string("key '") + key + "' must be finite");
  return d;
}

bool get_bool(const json& v, const char* key) {
  if (!v.is_boolean()) throw config_error(std::string("key '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::vector<std::size_t> get_index_list(const json& v, const char* key) {
  if (!v.is_array()) throw config_error(std::string("key '") + key + "' must be an array");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(static_cast<std::size_t>(get_uint(e, key)));
  return out;
}

std::vector<int> get_int_list(const json& v, const char* key) {
  if (!v.is_array()) throw config_error(std::string("key '") + key + "' must be an array");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) {
      throw config_error(std::string("key '") + key + "' must hold integers");
    }
    out.push_back(e.get<int>());
  }
  return out;
}

std::vector<std::pair<std::string, int>> get_token_list(const json& v, const char* key) {
  if (!v.is_array() || v.empty()) {
    throw config_error(std::string("key '") + key + "' must be a non-empty array");
  }
  std::vector<std::pair<std::string, int>> out;
  for (const auto& e : v) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_integer()) {
      throw config_error(std::string("key '") + key +
                         "' entries must be [word, attribute_id] pairs");
    }
    out.emplace_back(e[0].get<std::string>(), e[1].get<int>());
  }
  return out;
}

std::int64_t get_int(const json& v, const char* key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw config_error(std::string("key '") + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

}  // namespace

run_config parse_run_config(const std::string& json_text) {
  const json j = parse_text(json_text, "run config");
  check_keys(j,
             {"layout_manifest", "source_video", "output_dir", "source_tokens", "target_tokens",
              "blend_region", "steps", "active_steps", "lambda0", "denoiser_seed",
              "embedder_seed", "text_embed_dim", "denoiser_out_gain", "s_st_mode", "chunk_size",
              "blend_every_step", "record_steps", "record_layers", "heatmap_frame",
              "heatmap_self_queries"},
             "run config");

  run_config c;
  c.layout_manifest = get_string(require(j, "layout_manifest", "run config"), "layout_manifest");
  c.source_video = get_string(require(j, "source_video", "run config"), "source_video");
  c.output_dir = get_string(require(j, "output_dir", "run config"), "output_dir");
  c.source_tokens = get_token_list(require(j, "source_tokens", "run config"), "source_tokens");
  c.target_tokens = get_token_list(require(j, "target_tokens", "run config"), "target_tokens");
  c.blend_region = get_int_list(require(j, "blend_region", "run config"), "blend_region");
  if (c.blend_region.empty()) throw config_error("key 'blend_region' must not be empty");

  if (const json* v = find(j, "steps")) c.steps = static_cast<std::size_t>(get_uint(*v, "steps"));
  if (const json* v = find(j, "active_steps")) {
    c.active_steps = static_cast<std::size_t>(get_uint(*v, "active_steps"));
  }
  if (const json* v = find(j, "lambda0")) c.lambda0 = get_double(*v, "lambda0");
  if (const json* v = find(j, "denoiser_seed")) c.denoiser_seed = get_uint(*v, "denoiser_seed");
  if (const json* v = find(j, "embedder_seed")) c.embedder_seed = get_uint(*v, "embedder_seed");
  if (const json* v = find(j, "text_embed_dim")) {
    c.text_embed_dim = static_cast<std::size_t>(get_uint(*v, "text_embed_dim"));
  }
  if (const json* v = find(j, "denoiser_out_gain")) {
    c.denoiser_out_gain = get_double(*v, "denoiser_out_gain");
  }
  if (const json* v = find(j, "s_st_mode")) c.s_st_mode = get_string(*v, "s_st_mode");
  if (const json* v = find(j, "chunk_size")) {
    c.chunk_size = static_cast<std::size_t>(get_uint(*v, "chunk_size"));
  }
  if (const json* v = find(j, "blend_every_step")) {
    c.blend_every_step = get_bool(*v, "blend_every_step");
  }
  if (const json* v = find(j, "record_steps")) c.record_steps = get_index_list(*v, "record_steps");
  if (const json* v = find(j, "record_layers")) {
    c.record_layers = get_index_list(*v, "record_layers");
  }
  if (const json* v = find(j, "heatmap_frame")) {
    c.heatmap_frame = static_cast<std::size_t>(get_uint(*v, "heatmap_frame"));
  }
  if (const json* v = find(j, "heatmap_self_queries")) {
    c.heatmap_self_queries = get_index_list(*v, "heatmap_self_queries");
  }

  if (c.steps == 0) throw config_error("key 'steps' must be at least 1");
  if (c.active_steps > c.steps) {
    throw config_error("key 'active_steps' must not exceed 'steps'");
  }
  if (c.lambda0 < 0.0) throw config_error("key 'lambda0' must be non-negative");
  if (c.text_embed_dim == 0) throw config_error("key 'text_embed_dim' must be at least 1");
  if (!(c.denoiser_out_gain > 0.0)) {
    throw config_error("key 'denoiser_out_gain' must be positive");
  }
  if (c.s_st_mode != "key" && c.s_st_mode != "pair_min") {
    throw config_error("key 's_st_mode' must be 'key' or 'pair_min', got '" + c.s_st_mode + "'");
  }
  if (c.chunk_size == 0) throw config_error("key 'chunk_size' must be at least 1");
  for (std::size_t s : c.record_steps) {
    if (s >= c.steps) {
      throw config_error("key 'record_steps' holds step " + std::to_string(s) +
                         " outside the run of " + std::to_string(c.steps) + " steps");
    }
  }
  for (std::size_t l : c.record_layers) {
    if (l >= toy_denoiser::num_layers()) {
      throw config_error("key 'record_layers' holds layer " + std::to_string(l) +
                         "; the denoiser has layers 0.." +
                         std::to_string(toy_denoiser::num_layers() - 1));
    }
  }
  return c;
}

run_config load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path));
}

std::string run_config_to_json(const run_config& c) {
  ordered_json j;
  j["layout_manifest"] = c.layout_manifest;
  j["source_video"] = c.source_video;
  j["output_dir"] = c.output_dir;
  ordered_json src = ordered_json::array();
  for (const auto& [word, id] : c.source_tokens) src.push_back({word, id});
  j["source_tokens"] = std::move(src);
  ordered_json tgt = ordered_json::array();
  for (const auto& [word, id] : c.target_tokens) tgt.push_back({word, id});
  j["target_tokens"] = std::move(tgt);
  j["blend_region"] = c.blend_region;
  j["steps"] = c.steps;
  j["active_steps"] = c.active_steps;
  j["lambda0"] = c.lambda0;
  j["denoiser_seed"] = c.denoiser_seed;
  j["embedder_seed"] = c.embedder_seed;
  j["text_embed_dim"] = c.text_embed_dim;
  j["denoiser_out_gain"] = c.denoiser_out_gain;
  j["s_st_mode"] = c.s_st_mode;
  j["chunk_size"] = c.chunk_size;
  j["blend_every_step"] = c.blend_every_step;
  j["record_steps"] = c.record_steps;
  j["record_layers"] = c.record_layers;
  j["heatmap_frame"] = c.heatmap_frame;
  j["heatmap_self_queries"] = c.heatmap_self_queries;
  return j.dump(2) + "\n";
}

std::string config_hash(const run_config& config) {
  const std::uint64_t h = fnv1a64(run_config_to_json(config));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fixture_spec parse_fixture_spec(const std::string& json_text) {
  const json j = parse_text(json_text, "fixture spec");
  check_keys(j, {"frames", "height", "width", "channels", "seed", "noise", "shapes"},
             "fixture spec");
  fixture_spec spec;
  spec.frames = static_cast<std::size_t>(get_uint(require(j, "frames", "fixture spec"), "frames"));
  spec.height = static_cast<std::size_t>(get_uint(require(j, "height", "fixture spec"), "height"));
  spec.width = static_cast<std::size_t>(get_uint(require(j, "width", "fixture spec"), "width"));
  spec.channels =
      static_cast<std::size_t>(get_uint(require(j, "channels", "fixture spec"), "channels"));
  if (const json* v = find(j, "seed")) spec.seed = get_uint(*v, "seed");
  if (const json* v = find(j, "noise")) spec.noise = get_double(*v, "noise");

  const json& shapes = require(j, "shapes", "fixture spec");
  if (!shapes.is_array() || shapes.empty()) {
    throw config_error("key 'shapes' must be a non-empty array");
  }
  spec.shapes.clear();
  for (const auto& s : shapes) {
    check_keys(s,
               {"kind", "attribute", "top", "left", "height", "width", "velocity_row",
                "velocity_col"},
               "shape");
    shape_spec shape;
    if (const json* v = find(s, "kind")) shape.kind = get_string(*v, "kind");
    shape.attribute = static_cast<int>(get_int(require(s, "attribute", "shape"), "attribute"));
    shape.top = get_int(require(s, "top", "shape"), "top");
    shape.left = get_int(require(s, "left", "shape"), "left");
    shape.shape_height =
        static_cast<std::size_t>(get_uint(require(s, "height", "shape"), "height"));
    shape.shape_width = static_cast<std::size_t>(get_uint(require(s, "width", "shape"), "width"));
    if (const json* v = find(s, "velocity_row")) shape.velocity_row = get_int(*v, "velocity_row");
    if (const json* v = find(s, "velocity_col")) shape.velocity_col = get_int(*v, "velocity_col");
    spec.shapes.push_back(std::move(shape));
  }
  try {
    spec.validate();
  } catch (const validation_error& e) {
    throw config_error(std::string("fixture spec invalid: ") + e.what());
  }
  return spec;
}

fixture_spec load_fixture_spec(const std::filesystem::path& path) {
  return parse_fixture_spec(read_file(path));
}

std::string fixture_spec_to_json(const fixture_spec& spec) {
  ordered_json j;
  j["frames"] = spec.frames;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["channels"] = spec.channels;
  j["seed"] = spec.seed;
  j["noise"] = spec.noise;
  ordered_json shapes = ordered_json::array();
  for (const auto& s : spec.shapes) {
    ordered_json o;
    o["kind"] = s.kind;
    o["attribute"] = s.attribute;
    o["top"] = s.top;
    o["left"] = s.left;
    o["height"] = s.shape_height;
    o["width"] = s.shape_width;
    o["velocity_row"] = s.velocity_row;
    o["velocity_col"] = s.velocity_col;
    shapes.push_back(std::move(o));
  }
  j["shapes"] = std::move(shapes);
  return j.dump(2) + "\n";
}

}  // namespace stlayout
