#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "stlayout/layout.hpp"
#include "stlayout/numerics.hpp"
#include "stlayout/pipeline.hpp"

namespace stlayout {

// Raw self-attention mass split for one frame's head-averaged map: per query
// attribute, how much probability lands on keys of the same attribute vs
// elsewhere. Rows of `map` must sum to 1 (within 1e-6).
struct mass_split {
  double intra = 0.0;
  double leaked = 0.0;
};

std::map<int, mass_split> self_attention_masses(const matrix& map, const layout_video& layout,
                                                std::size_t frame);

struct attribute_leakage {
  double intra_mass = 0.0;     // in-attribute share of the attention mass
  double leakage_ratio = 0.0;  // complement; the two sum to 1 within 1e-9
};

std::map<int, attribute_leakage> self_attention_leakage(const matrix& map,
                                                        const layout_video& layout,
                                                        std::size_t frame);

// Cross-attention column masses for one frame: per prompt token bound to an
// attribute, the attention mass its column receives from queries inside that
// attribute's mask vs in total.
struct coverage_mass {
  double in_mask = 0.0;
  double total = 0.0;
};

std::map<std::size_t, coverage_mass> cross_attention_masses(const matrix& map,
                                                            const layout_video& layout,
                                                            std::size_t frame,
                                                            const token_attribute_map& tokens);

// coverage = in-mask mass / total column mass, per bound token.
std::map<std::size_t, double> cross_attention_coverage(const matrix& map,
                                                       const layout_video& layout,
                                                       std::size_t frame,
                                                       const token_attribute_map& tokens);

using cell_key = std::pair<std::size_t, std::size_t>;  // (step, layer)

struct cell_metrics {
  attention_kind kind = attention_kind::self;
  double lambda = 0.0;
  std::map<int, attribute_leakage> self_by_attribute;  // self cells
  std::map<std::size_t, double> cross_coverage;        // cross cells
};

// Leakage / coverage per recorded (step, layer) cell, aggregated over frames.
struct leakage_report {
  std::vector<std::size_t> steps;
  std::vector<std::size_t> layers;
  std::map<std::size_t, double> lambda_by_step;
  std::map<cell_key, cell_metrics> cells;
};

// Aggregates a run's recorded attention maps; layouts are rescaled to each
// cell's grid with the same nearest-neighbor rule the run used.
leakage_report metrics_from_report(const run_report& report, const layout_video& layout,
                                   const token_attribute_map& target_tokens);

// Per-cell metric changes between two runs sampled at identical cells;
// deltas are second minus first.
struct comparison_summary {
  std::vector<std::size_t> steps;
  std::vector<std::size_t> layers;
  std::map<cell_key, std::map<int, double>> self_leakage_delta;
  std::map<cell_key, std::map<int, double>> self_intra_delta;
  std::map<cell_key, std::map<std::size_t, double>> cross_coverage_delta;
  std::size_t self_entries = 0;
  std::size_t cross_entries = 0;
  double mean_self_leakage_first = 0.0;
  double mean_self_leakage_second = 0.0;
  double mean_cross_coverage_first = 0.0;
  double mean_cross_coverage_second = 0.0;
};

comparison_summary compare_runs(const leakage_report& first, const leakage_report& second);

// Deterministic serialization: fixed key order, %.17g floats (round-trip
// exact), no locale dependence. Identical reports produce identical bytes.
std::string to_json(const leakage_report& report);
std::string to_json(const comparison_summary& summary);

leakage_report parse_leakage_report(const std::string& json_text);

}  // namespace stlayout
