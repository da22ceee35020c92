#include "stlayout/metrics.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace stlayout {

namespace {

constexpr double row_sum_tolerance = 1e-6;

void check_rows_normalized(const matrix& map, const char* what) {
  for (std::size_t r = 0; r < map.rows(); ++r) {
    double sum = 0.0;
    for (double v : map.row(r)) sum += v;
    if (std::abs(sum - 1.0) > row_sum_tolerance) {
      throw validation_error(std::string(what) + ": attention map row " + std::to_string(r) +
                             " sums to " + std::to_string(sum) + ", expected 1");
    }
  }
}

}  // namespace

std::map<int, mass_split> self_attention_masses(const matrix& map, const layout_video& layout,
                                                std::size_t frame) {
  if (frame >= layout.frames()) {
    throw bounds_error("frame " + std::to_string(frame) + " outside layout");
  }
  const std::size_t hw = layout.height() * layout.width();
  if (map.rows() != hw || map.cols() != layout.frames() * hw) {
    throw shape_error("self-attention map is " + std::to_string(map.rows()) + "x" +
                      std::to_string(map.cols()) + ", layout expects " + std::to_string(hw) +
                      "x" + std::to_string(layout.frames() * hw));
  }
  check_rows_normalized(map, "self_attention_masses");

  const auto& labels = layout.flat_labels();
  const std::size_t query_base = frame * hw;
  std::map<int, mass_split> out;
  for (std::size_t a = 0; a < hw; ++a) {
    const int qa = labels[query_base + a];
    mass_split& split = out[qa];
    auto row = map.row(a);
    for (std::size_t b = 0; b < row.size(); ++b) {
      if (static_cast<int>(labels[b]) == qa) {
        split.intra += row[b];
      } else {
        split.leaked += row[b];
      }
    }
  }
  return out;
}

std::map<int, attribute_leakage> self_attention_leakage(const matrix& map,
                                                        const layout_video& layout,
                                                        std::size_t frame) {
  std::map<int, attribute_leakage> out;
  for (const auto& [id, split] : self_attention_masses(map, layout, frame)) {
    const double total = split.intra + split.leaked;
    out[id] = attribute_leakage{split.intra / total, split.leaked / total};
  }
  return out;
}

std::map<std::size_t, coverage_mass> cross_attention_masses(const matrix& map,
                                                            const layout_video& layout,
                                                            std::size_t frame,
                                                            const token_attribute_map& tokens) {
  if (frame >= layout.frames()) {
    throw bounds_error("frame " + std::to_string(frame) + " outside layout");
  }
  const std::size_t hw = layout.height() * layout.width();
  if (map.rows() != hw || map.cols() != tokens.size()) {
    throw shape_error("cross-attention map is " + std::to_string(map.rows()) + "x" +
                      std::to_string(map.cols()) + ", expected " + std::to_string(hw) + "x" +
                      std::to_string(tokens.size()));
  }
  check_rows_normalized(map, "cross_attention_masses");

  const auto& labels = layout.flat_labels();
  const std::size_t query_base = frame * hw;
  std::map<std::size_t, coverage_mass> out;
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    const int id = tokens.attribute_ids[b];
    if (id <= 0) continue;  // unbound tokens carry no coverage notion
    coverage_mass& cm = out[b];
    for (std::size_t a = 0; a < hw; ++a) {
      const double v = map(a, b);
      cm.total += v;
      if (static_cast<int>(labels[query_base + a]) == id) cm.in_mask += v;
    }
  }
  return out;
}

std::map<std::size_t, double> cross_attention_coverage(const matrix& map,
                                                       const layout_video& layout,
                                                       std::size_t frame,
                                                       const token_attribute_map& tokens) {
  std::map<std::size_t, double> out;
  for (const auto& [b, cm] : cross_attention_masses(map, layout, frame, tokens)) {
    if (cm.total <= 0.0) {
      throw validation_error("token " + std::to_string(b) + " receives no attention mass");
    }
    out[b] = cm.in_mask / cm.total;
  }
  return out;
}

leakage_report metrics_from_report(const run_report& report, const layout_video& layout,
                                   const token_attribute_map& target_tokens) {
  leakage_report out;
  out.steps = report.recorded_steps;
  out.layers = report.recorded_layers;
  out.lambda_by_step = report.lambda_by_step;

  std::map<std::pair<std::size_t, std::size_t>, layout_video> scaled_cache;
  auto layout_for = [&](std::size_t gh, std::size_t gw) -> const layout_video& {
    if (gh == layout.height() && gw == layout.width()) return layout;
    auto it = scaled_cache.find({gh, gw});
    if (it == scaled_cache.end()) {
      it = scaled_cache.emplace(std::pair{gh, gw}, downsample_nearest(layout, gh, gw)).first;
    }
    return it->second;
  };

  for (const auto& [key, cell] : report.cells) {
    if (cell.frame_maps.size() != layout.frames()) {
      throw validation_error("recorded cell does not cover all frames");
    }
    const layout_video& scaled = layout_for(cell.grid_height, cell.grid_width);
    cell_metrics metrics;
    metrics.kind = cell.kind;
    metrics.lambda = cell.lambda;
    if (cell.kind == attention_kind::self) {
      std::map<int, mass_split> acc;
      for (std::size_t f = 0; f < cell.frame_maps.size(); ++f) {
        for (const auto& [id, split] : self_attention_masses(cell.frame_maps[f], scaled, f)) {
          acc[id].intra += split.intra;
          acc[id].leaked += split.leaked;
        }
      }
      for (const auto& [id, split] : acc) {
        const double total = split.intra + split.leaked;
        metrics.self_by_attribute[id] = attribute_leakage{split.intra / total,
                                                          split.leaked / total};
      }
    } else {
      std::map<std::size_t, coverage_mass> acc;
      for (std::size_t f = 0; f < cell.frame_maps.size(); ++f) {
        for (const auto& [b, cm] :
             cross_attention_masses(cell.frame_maps[f], scaled, f, target_tokens)) {
          acc[b].in_mask += cm.in_mask;
          acc[b].total += cm.total;
        }
      }
      for (const auto& [b, cm] : acc) {
        if (cm.total <= 0.0) {
          throw validation_error("token " + std::to_string(b) + " receives no attention mass");
        }
        metrics.cross_coverage[b] = cm.in_mask / cm.total;
      }
    }
    out.cells[key] = std::move(metrics);
  }
  return out;
}

comparison_summary compare_runs(const leakage_report& first, const leakage_report& second) {
  if (first.steps != second.steps || first.layers != second.layers) {
    throw validation_error("runs were sampled at different (step, layer) cells");
  }
  if (first.cells.size() != second.cells.size()) {
    throw validation_error("runs recorded different cell sets");
  }

  comparison_summary out;
  out.steps = first.steps;
  out.layers = first.layers;
  double leak_first = 0.0, leak_second = 0.0, cov_first = 0.0, cov_second = 0.0;

  for (const auto& [key, a] : first.cells) {
    const auto itb = second.cells.find(key);
    if (itb == second.cells.end()) {
      throw validation_error("second run is missing a recorded cell");
    }
    const cell_metrics& b = itb->second;
    if (a.kind != b.kind) throw validation_error("cell kinds disagree between runs");
    if (a.kind == attention_kind::self) {
      if (a.self_by_attribute.size() != b.self_by_attribute.size()) {
        throw validation_error("runs measured different attribute sets");
      }
      for (const auto& [id, la] : a.self_by_attribute) {
        const auto itb2 = b.self_by_attribute.find(id);
        if (itb2 == b.self_by_attribute.end()) {
          throw validation_error("runs measured different attribute sets");
        }
        const attribute_leakage& lb = itb2->second;
        out.self_leakage_delta[key][id] = lb.leakage_ratio - la.leakage_ratio;
        out.self_intra_delta[key][id] = lb.intra_mass - la.intra_mass;
        leak_first += la.leakage_ratio;
        leak_second += lb.leakage_ratio;
        ++out.self_entries;
      }
    } else {
      if (a.cross_coverage.size() != b.cross_coverage.size()) {
        throw validation_error("runs measured different token sets");
      }
      for (const auto& [tok, ca] : a.cross_coverage) {
        const auto itb2 = b.cross_coverage.find(tok);
        if (itb2 == b.cross_coverage.end()) {
          throw validation_error("runs measured different token sets");
        }
        out.cross_coverage_delta[key][tok] = itb2->second - ca;
        cov_first += ca;
        cov_second += itb2->second;
        ++out.cross_entries;
      }
    }
  }
  if (out.self_entries > 0) {
    out.mean_self_leakage_first = leak_first / static_cast<double>(out.self_entries);
    out.mean_self_leakage_second = leak_second / static_cast<double>(out.self_entries);
  }
  if (out.cross_entries > 0) {
    out.mean_cross_coverage_first = cov_first / static_cast<double>(out.cross_entries);
    out.mean_cross_coverage_second = cov_second / static_cast<double>(out.cross_entries);
  }
  return out;
}

namespace {

// Hand-rolled writer: nlohmann's dumper picks shortest-round-trip float forms,
// which is a different byte stream for equal values than a fixed %.17g; the
// metrics files promise byte-stable output, so the format is pinned here.
void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_quoted(std::string& out, const std::string& s) {
  out += '"';
  out += s;  // keys are digits or fixed words; no escaping needed
  out += '"';
}

void append_index_list(std::string& out, const std::vector<std::size_t>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += ']';
}

template <typename Map, typename Fn>
void append_object(std::string& out, const Map& map, Fn&& value_writer) {
  out += '{';
  bool first = true;
  for (const auto& [key, value] : map) {
    if (!first) out += ',';
    first = false;
    append_quoted(out, std::to_string(key));
    out += ':';
    value_writer(out, value);
  }
  out += '}';
}

// cells keyed (step, layer) are emitted as nested step -> layer objects.
template <typename CellMap, typename Fn>
void append_cells(std::string& out, const CellMap& cells, Fn&& cell_writer) {
  out += '{';
  bool first_step = true;
  auto it = cells.begin();
  while (it != cells.end()) {
    const std::size_t step = it->first.first;
    if (!first_step) out += ',';
    first_step = false;
    append_quoted(out, std::to_string(step));
    out += ":{";
    bool first_layer = true;
    for (; it != cells.end() && it->first.first == step; ++it) {
      if (!first_layer) out += ',';
      first_layer = false;
      append_quoted(out, std::to_string(it->first.second));
      out += ':';
      cell_writer(out, it->second);
    }
    out += '}';
  }
  out += '}';
}

}  // namespace

std::string to_json(const leakage_report& report) {
  std::string out;
  out.reserve(4096);
  out += "{\"schema_version\":1,\"steps\":";
  append_index_list(out, report.steps);
  out += ",\"layers\":";
  append_index_list(out, report.layers);
  out += ",\"lambda_by_step\":";
  append_object(out, report.lambda_by_step,
                [](std::string& o, double v) { append_double(o, v); });
  out += ",\"cells\":";
  append_cells(out, report.cells, [](std::string& o, const cell_metrics& cell) {
    o += "{\"kind\":";
    o += cell.kind == attention_kind::self ? "\"self\"" : "\"cross\"";
    o += ",\"lambda\":";
    append_double(o, cell.lambda);
    if (cell.kind == attention_kind::self) {
      o += ",\"attributes\":";
      append_object(o, cell.self_by_attribute, [](std::string& o2, const attribute_leakage& l) {
        o2 += "{\"intra_mass\":";
        append_double(o2, l.intra_mass);
        o2 += ",\"leakage_ratio\":";
        append_double(o2, l.leakage_ratio);
        o2 += '}';
      });
    } else {
      o += ",\"coverage\":";
      append_object(o, cell.cross_coverage,
                    [](std::string& o2, double v) { append_double(o2, v); });
    }
    o += '}';
  });
  out += "}\n";
  return out;
}

std::string to_json(const comparison_summary& summary) {
  std::string out;
  out.reserve(4096);
  out += "{\"schema_version\":1,\"steps\":";
  append_index_list(out, summary.steps);
  out += ",\"layers\":";
  append_index_list(out, summary.layers);

  // Re-join the per-kind delta maps into one nested cells object.
  std::map<cell_key, std::string> cell_bodies;
  for (const auto& [key, deltas] : summary.self_leakage_delta) {
    std::string body = "{\"kind\":\"self\",\"leakage_delta\":";
    append_object(body, deltas, [](std::string& o, double v) { append_double(o, v); });
    body += ",\"intra_delta\":";
    append_object(body, summary.self_intra_delta.at(key),
                  [](std::string& o, double v) { append_double(o, v); });
    body += '}';
    cell_bodies[key] = std::move(body);
  }
  for (const auto& [key, deltas] : summary.cross_coverage_delta) {
    std::string body = "{\"kind\":\"cross\",\"coverage_delta\":";
    append_object(body, deltas, [](std::string& o, double v) { append_double(o, v); });
    body += '}';
    cell_bodies[key] = std::move(body);
  }
  out += ",\"cells\":";
  append_cells(out, cell_bodies, [](std::string& o, const std::string& body) { o += body; });

  out += ",\"aggregate\":{\"self_entries\":";
  out += std::to_string(summary.self_entries);
  out += ",\"mean_leakage_first\":";
  append_double(out, summary.mean_self_leakage_first);
  out += ",\"mean_leakage_second\":";
  append_double(out, summary.mean_self_leakage_second);
  out += ",\"mean_leakage_delta\":";
  append_double(out, summary.mean_self_leakage_second - summary.mean_self_leakage_first);
  out += ",\"cross_entries\":";
  out += std::to_string(summary.cross_entries);
  out += ",\"mean_coverage_first\":";
  append_double(out, summary.mean_cross_coverage_first);
  out += ",\"mean_coverage_second\":";
  append_double(out, summary.mean_cross_coverage_second);
  out += ",\"mean_coverage_delta\":";
  append_double(out, summary.mean_cross_coverage_second - summary.mean_cross_coverage_first);
  out += "}}\n";
  return out;
}

leakage_report parse_leakage_report(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("failed to parse metrics json: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1) {
      throw io_error("unsupported metrics schema version");
    }
    leakage_report out;
    for (const auto& s : j.at("steps")) out.steps.push_back(s.get<std::size_t>());
    for (const auto& l : j.at("layers")) out.layers.push_back(l.get<std::size_t>());
    for (const auto& [key, value] : j.at("lambda_by_step").items()) {
      out.lambda_by_step[std::stoull(key)] = value.get<double>();
    }
    for (const auto& [step_key, layers] : j.at("cells").items()) {
      const std::size_t step = std::stoull(step_key);
      for (const auto& [layer_key, cell] : layers.items()) {
        const std::size_t layer = std::stoull(layer_key);
        cell_metrics metrics;
        const std::string kind = cell.at("kind").get<std::string>();
        metrics.lambda = cell.at("lambda").get<double>();
        if (kind == "self") {
          metrics.kind = attention_kind::self;
          for (const auto& [id, leak] : cell.at("attributes").items()) {
            metrics.self_by_attribute[std::stoi(id)] =
                attribute_leakage{leak.at("intra_mass").get<double>(),
                                  leak.at("leakage_ratio").get<double>()};
          }
        } else if (kind == "cross") {
          metrics.kind = attention_kind::cross;
          for (const auto& [tok, cov] : cell.at("coverage").items()) {
            metrics.cross_coverage[std::stoull(tok)] = cov.get<double>();
          }
        } else {
          throw io_error("metrics cell has unknown kind '" + kind + "'");
        }
        out.cells[{step, layer}] = std::move(metrics);
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("metrics json has unexpected structure: ") + e.what());
  }
}

}  // namespace stlayout
