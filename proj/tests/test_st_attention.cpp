#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "stlayout/rng.hpp"
#include "stlayout/st_attention.hpp"

using namespace stlayout;

namespace {

matrix random_matrix(rng& r, std::size_t rows, std::size_t cols, double lo, double hi) {
  matrix m(rows, cols);
  for (double& x : m.data()) x = r.next_in(lo, hi);
  return m;
}

layout_video random_layout(rng& r, std::size_t frames, std::size_t h, std::size_t w,
                           int num_attrs) {
  std::vector<label_frame> lf;
  for (std::size_t f = 0; f < frames; ++f) {
    label_frame fr{h, w, std::vector<std::uint8_t>(h * w, 0)};
    for (auto& v : fr.labels) v = std::uint8_t(r.next_index(std::size_t(num_attrs) + 1));
    lf.push_back(fr);
  }
  lf[0].labels[0] = std::uint8_t(num_attrs);  // pin the top id so load() accepts
  for (int id = 1; id < num_attrs; ++id) {
    std::size_t f = r.next_index(frames);
    lf[f].labels[1 + r.next_index(h * w - 1)] = std::uint8_t(id);
  }
  return layout_video::load(std::move(lf));
}

// 1 frame, 2x4: the token-map examples live on this grid.
layout_video two_attribute_layout() {
  label_frame f{2, 4, {1, 1, 0, 0,
                       0, 0, 2, 2}};
  return layout_video::load({f});
}

double row_mass_on_ones(const matrix& map, const matrix& cond, std::size_t row) {
  double mass = 0.0;
  for (std::size_t j = 0; j < map.cols(); ++j)
    if (cond(row, j) == 1.0) mass += map(row, j);
  return mass;
}

}  // namespace

TEST_CASE("single-attribute layout yields an all-ones self map") {
  label_frame f{2, 2, {1, 1, 1, 1}};
  layout_video layout = layout_video::load({f, f});
  for (std::size_t fr = 0; fr < 2; ++fr) {
    condition_map map = build_self_condition_map(layout, fr);
    CHECK(map.kind == attention_kind::self);
    CHECK(map.values.rows() == 4);
    CHECK(map.values.cols() == 8);
    for (double x : map.values.data()) CHECK(x == 1.0);
  }
}

TEST_CASE("self map on a two-frame striped layout") {
  label_frame f{1, 2, {1, 2}};
  layout_video layout = layout_video::load({f, f});
  condition_map m0 = build_self_condition_map(layout, 0);
  condition_map m1 = build_self_condition_map(layout, 1);
  // Query label 1 matches key tokens 0 and 2, label 2 matches 1 and 3.
  std::vector<double> want{1, 0, 1, 0,
                           0, 1, 0, 1};
  CHECK(m0.values == matrix(2, 4, want));
  CHECK(m1.values == matrix(2, 4, want));
  CHECK_THROWS_AS(build_self_condition_map(layout, 2), bounds_error);
}

TEST_CASE("self map matches pairwise label comparison on random layouts") {
  rng r(211);
  for (int rep = 0; rep < 25; ++rep) {
    std::size_t frames = 1 + r.next_index(3);
    std::size_t h = 1 + r.next_index(6);
    std::size_t w = 1 + r.next_index(6);
    int attrs = 1 + int(r.next_index(3));
    if (h * w < std::size_t(attrs) + 1) continue;
    layout_video layout = random_layout(r, frames, h, w, attrs);
    std::size_t hw = h * w;
    for (std::size_t f = 0; f < frames; ++f) {
      condition_map map = build_self_condition_map(layout, f);
      REQUIRE(map.values.rows() == hw);
      REQUIRE(map.values.cols() == frames * hw);
      for (std::size_t a = 0; a < hw; ++a)
        for (std::size_t b = 0; b < frames * hw; ++b) {
          double want = layout.label_at_token(f * hw + a) == layout.label_at_token(b) ? 1.0 : 0.0;
          CHECK(map.values(a, b) == want);
        }
    }
  }
}

TEST_CASE("self maps agree across query frames") {
  rng r(223);
  layout_video layout = random_layout(r, 3, 4, 4, 2);
  std::size_t hw = 16;
  std::vector<condition_map> maps;
  for (std::size_t f = 0; f < 3; ++f) maps.push_back(build_self_condition_map(layout, f));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t a = 0; a < hw; ++a)
        for (std::size_t b = 0; b < hw; ++b)
          CHECK(maps[i].values(a, j * hw + b) == maps[j].values(b, i * hw + a));
}

TEST_CASE("cross map reproduces the eight-token binding example") {
  layout_video layout = two_attribute_layout();
  token_attribute_map tokens = parse_token_map(
      {{"the", 0}, {"fox", 1}, {"fur", 1}, {"runs", 0},
       {"by", 0}, {"lake", 2}, {"water", 2}, {"shore", 2}},
      layout);
  condition_map map = build_cross_condition_map(layout, 0, tokens);
  CHECK(map.kind == attention_kind::cross);
  REQUIRE(map.values.rows() == 8);
  REQUIRE(map.values.cols() == 8);

  std::vector<double> mask1{1, 1, 0, 0, 0, 0, 0, 0};
  std::vector<double> mask2{0, 0, 0, 0, 0, 0, 1, 1};
  for (std::size_t a = 0; a < 8; ++a) {
    CHECK(map.values(a, 0) == 0.0);
    CHECK(map.values(a, 1) == mask1[a]);
    CHECK(map.values(a, 2) == mask1[a]);
    CHECK(map.values(a, 3) == 0.0);
    CHECK(map.values(a, 4) == 0.0);
    CHECK(map.values(a, 5) == mask2[a]);
    CHECK(map.values(a, 6) == mask2[a]);
    CHECK(map.values(a, 7) == mask2[a]);
  }
}

TEST_CASE("cross map matches per-pair enumeration on random layouts") {
  rng r(227);
  for (int rep = 0; rep < 25; ++rep) {
    std::size_t frames = 1 + r.next_index(3);
    std::size_t h = 1 + r.next_index(6);
    std::size_t w = 1 + r.next_index(6);
    int attrs = 1 + int(r.next_index(3));
    if (h * w < std::size_t(attrs) + 1) continue;
    layout_video layout = random_layout(r, frames, h, w, attrs);
    std::vector<std::pair<std::string, int>> words;
    std::size_t count = 1 + r.next_index(6);
    for (std::size_t b = 0; b < count; ++b)
      words.emplace_back("w" + std::to_string(b), int(r.next_index(std::size_t(attrs) + 1)));
    words.emplace_back("bound", 1);
    token_attribute_map tokens = parse_token_map(words, layout);

    std::size_t f = r.next_index(frames);
    condition_map map = build_cross_condition_map(layout, f, tokens);
    REQUIRE(map.values.rows() == h * w);
    REQUIRE(map.values.cols() == tokens.size());
    for (std::size_t a = 0; a < h * w; ++a)
      for (std::size_t b = 0; b < tokens.size(); ++b) {
        int id = tokens.attribute_ids[b];
        double want =
            (id != 0 && int(layout.label_at_token(f * h * w + a)) == id) ? 1.0 : 0.0;
        CHECK(map.values(a, b) == want);
      }
  }
}

TEST_CASE("size regularizer weights keys by attribute area") {
  layout_video layout = two_attribute_layout();  // areas: 0 -> 0.5, 1 -> 0.25, 2 -> 0.25
  attribute_areas areas = compute_areas(layout);
  condition_map map = build_self_condition_map(layout, 0);
  size_regularizer s = build_size_regularizer(map, areas, layout, nullptr);
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 8; ++b) {
      double want = areas.proportions[layout.label_at_token(b)];
      CHECK(s.values(a, b) == want);
    }
}

TEST_CASE("pair-min mode takes the smaller side") {
  label_frame f{2, 2, {1, 0, 0, 0}};  // attr 1 covers 25%
  layout_video layout = layout_video::load({f});
  attribute_areas areas = compute_areas(layout);
  condition_map map = build_self_condition_map(layout, 0);
  size_regularizer s =
      build_size_regularizer(map, areas, layout, nullptr, size_mode::pair_min);
  // Query 0 carries attr 1 (area 0.25); every pair with it is damped by 0.25.
  for (std::size_t b = 0; b < 4; ++b) CHECK(s.values(0, b) == 0.25);
  // Background-background pairs keep the 0.75 area.
  CHECK(s.values(1, 1) == 0.75);
  CHECK(s.values(1, 0) == 0.25);
}

TEST_CASE("cross regularizer leaves unbound token columns at zero") {
  layout_video layout = two_attribute_layout();
  attribute_areas areas = compute_areas(layout);
  token_attribute_map tokens =
      parse_token_map({{"the", 0}, {"fox", 1}, {"lake", 2}}, layout);
  condition_map map = build_cross_condition_map(layout, 0, tokens);
  size_regularizer s = build_size_regularizer(map, areas, layout, &tokens);
  for (std::size_t a = 0; a < 8; ++a) {
    CHECK(s.values(a, 0) == 0.0);
    CHECK(s.values(a, 1) == 0.25);
    CHECK(s.values(a, 2) == 0.25);
  }
}

TEST_CASE("a full-cover attribute damps modulation away entirely") {
  label_frame f{2, 2, {1, 1, 1, 1}};
  layout_video layout = layout_video::load({f});
  attribute_areas areas = compute_areas(layout);
  CHECK(areas.proportions[1] == 1.0);
  condition_map map = build_self_condition_map(layout, 0);
  size_regularizer s = build_size_regularizer(map, areas, layout, nullptr);
  for (double x : s.values.data()) CHECK(x == 1.0);

  rng r(229);
  matrix q = random_matrix(r, 4, 4, -1.0, 1.0);
  matrix k = random_matrix(r, 4, 4, -1.0, 1.0);
  matrix v = random_matrix(r, 4, 4, -1.0, 1.0);
  attention_output plain = attention(q, k, v, 4);
  attention_output mod = modulated_attention(q, k, v, map, s, 1.5, 4);
  CHECK(mod.attention_map == plain.attention_map);
  CHECK(mod.attended == plain.attended);
}

TEST_CASE("regularizer wiring is validated") {
  layout_video layout = two_attribute_layout();
  attribute_areas areas = compute_areas(layout);
  token_attribute_map tokens = parse_token_map({{"fox", 1}}, layout);
  condition_map self_map = build_self_condition_map(layout, 0);
  condition_map cross_map = build_cross_condition_map(layout, 0, tokens);
  CHECK_THROWS_AS(build_size_regularizer(self_map, areas, layout, &tokens), validation_error);
  CHECK_THROWS_AS(build_size_regularizer(cross_map, areas, layout, nullptr), validation_error);
}

TEST_CASE("modulation strength decays linearly and gates off") {
  lambda_schedule sched{50, 15, 1.0};
  CHECK(sched.value_at(0) == 1.0);
  CHECK(sched.value_at(5) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(sched.value_at(14) == doctest::Approx(1.0 / 15.0).epsilon(1e-15));
  CHECK(sched.value_at(15) == 0.0);
  CHECK(sched.value_at(49) == 0.0);
  CHECK_THROWS_AS(sched.value_at(50), bounds_error);

  CHECK_THROWS_AS((lambda_schedule{0, 0, 1.0}).validate(), validation_error);
  CHECK_THROWS_AS((lambda_schedule{10, 11, 1.0}).validate(), validation_error);
  CHECK_THROWS_AS((lambda_schedule{10, 5, -0.5}).validate(), validation_error);
  // A zero base strength is a valid baseline configuration.
  CHECK_NOTHROW((lambda_schedule{10, 5, 0.0}).validate());
}

TEST_CASE("zero strength produces a zero bias") {
  rng r(233);
  similarity_matrix sim{random_matrix(r, 3, 5, -2.0, 2.0)};
  condition_map map{attention_kind::self, 0, random_matrix(r, 3, 5, 0.0, 1.0)};
  for (double& x : map.values.data()) x = x < 0.5 ? 0.0 : 1.0;
  size_regularizer s{matrix(3, 5, 0.2)};
  matrix m = modulation_term(sim, map, s, 0.0);
  for (double x : m.data()) CHECK(x == 0.0);
}

TEST_CASE("bias on a worked one-query row") {
  similarity_matrix sim{matrix(1, 2, {1.0, 3.0})};
  condition_map map{attention_kind::self, 0, matrix(1, 2, {1.0, 0.0})};
  size_regularizer s{matrix(1, 2, 0.0)};
  matrix m = modulation_term(sim, map, s, 1.0);
  CHECK(m(0, 0) == 2.0);
  CHECK(m(0, 1) == -2.0);
  // Halving lambda halves the bias.
  matrix half = modulation_term(sim, map, s, 0.5);
  CHECK(half(0, 0) == 1.0);
  CHECK(half(0, 1) == -1.0);
  CHECK_THROWS_AS(modulation_term(sim, map, size_regularizer{matrix(2, 2, 0.0)}, 1.0),
                  shape_error);
}

TEST_CASE("worked one-query modulated attention matches the scalar oracle") {
  matrix q(1, 1, {1.0});
  matrix k(2, 1, {1.0, 3.0});
  matrix v(2, 1, {10.0, 20.0});
  condition_map map{attention_kind::self, 0, matrix(1, 2, {1.0, 0.0})};
  size_regularizer s{matrix(1, 2, 0.0)};
  attention_output out = modulated_attention(q, k, v, map, s, 1.0, 1);

  // Bias turns logits (1, 3) into (3, 1); head_dim 1 leaves them unscaled.
  double z = std::exp(3.0) + std::exp(1.0);
  double p0 = std::exp(3.0) / z;
  double p1 = std::exp(1.0) / z;
  CHECK(out.attention_map(0, 0) == doctest::Approx(p0).epsilon(1e-6));
  CHECK(out.attention_map(0, 1) == doctest::Approx(p1).epsilon(1e-6));
  CHECK(out.attention_map(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(out.attention_map(0, 1) == doctest::Approx(0.1192).epsilon(1e-4));
  CHECK(out.attended(0, 0) == doctest::Approx(10.0 * p0 + 20.0 * p1).epsilon(1e-12));
}

TEST_CASE("zero strength is bitwise identical to plain attention") {
  rng r(239);
  for (int rep = 0; rep < 30; ++rep) {
    std::size_t nq = 1 + r.next_index(6);
    std::size_t nk = 1 + r.next_index(8);
    std::size_t d = 1 + r.next_index(6);
    matrix q = random_matrix(r, nq, d, -3.0, 3.0);
    matrix k = random_matrix(r, nk, d, -3.0, 3.0);
    matrix v = random_matrix(r, nk, d, -3.0, 3.0);
    condition_map map{attention_kind::self, 0, matrix(nq, nk)};
    for (double& x : map.values.data()) x = double(r.next_index(2));
    size_regularizer s{matrix(nq, nk, 0.3)};
    attention_output plain = attention(q, k, v, d);
    attention_output mod = modulated_attention(q, k, v, map, s, 0.0, d);
    CHECK(mod.attention_map == plain.attention_map);
    CHECK(mod.attended == plain.attended);
  }
}

TEST_CASE("shape problems are rejected even at zero strength") {
  matrix q(2, 3), k(4, 3), v(4, 3);
  condition_map bad{attention_kind::self, 0, matrix(2, 5)};
  size_regularizer s{matrix(2, 5, 0.0)};
  CHECK_THROWS_AS(modulated_attention(q, k, v, bad, s, 0.0, 3), shape_error);
  CHECK_THROWS_AS(modulated_attention(q, k, v, bad, s, 1.0, 3), shape_error);
  condition_map ok{attention_kind::self, 0, matrix(2, 4)};
  CHECK_THROWS_AS(modulated_attention(q, k, v, ok, size_regularizer{matrix(3, 4)}, 1.0, 3),
                  shape_error);
  CHECK_THROWS_AS(modulated_attention(q, k, v, ok, size_regularizer{matrix(2, 4)}, -1.0, 3),
                  validation_error);
  CHECK_THROWS_AS(attention(q, k, v, 2), shape_error);
  CHECK_THROWS_AS(attention(q, matrix(4, 2), v, 3), shape_error);
  CHECK_THROWS_AS(attention(q, k, matrix(3, 3), 3), shape_error);
}

TEST_CASE("an all-ones map with constant similarity rows changes nothing") {
  rng r(241);
  std::size_t d = 3;
  matrix q = random_matrix(r, 4, d, -2.0, 2.0);
  matrix k(5, d);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t c = 0; c < d; ++c) k(j, c) = 0.7 - 0.2 * double(c);  // identical keys
  matrix v = random_matrix(r, 5, d, -2.0, 2.0);
  condition_map map{attention_kind::self, 0, matrix(4, 5, 1.0)};
  size_regularizer s{matrix(4, 5, 0.0)};
  attention_output plain = attention(q, k, v, d);
  attention_output mod = modulated_attention(q, k, v, map, s, 1.0, d);
  CHECK(mod.attention_map == plain.attention_map);
  CHECK(mod.attended == plain.attended);
}

TEST_CASE("attention rows are probability distributions") {
  rng r(251);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t nq = 1 + r.next_index(6);
    std::size_t nk = 1 + r.next_index(8);
    std::size_t d = 1 + r.next_index(6);
    matrix q = random_matrix(r, nq, d, -3.0, 3.0);
    matrix k = random_matrix(r, nk, d, -3.0, 3.0);
    matrix v = random_matrix(r, nk, d, -3.0, 3.0);
    condition_map map{attention_kind::self, 0, matrix(nq, nk)};
    for (double& x : map.values.data()) x = double(r.next_index(2));
    size_regularizer s{matrix(nq, nk)};
    for (double& x : s.values.data()) x = r.next_in(0.0, 0.9);
    attention_output out = modulated_attention(q, k, v, map, s, r.next_in(0.0, 2.0), d);
    for (std::size_t i = 0; i < nq; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < nk; ++j) sum += out.attention_map(i, j);
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("mass on selected keys grows strictly with the strength") {
  rng r(257);
  const std::vector<double> lambdas{0.0, 0.5, 1.0, 2.0};
  for (int rep = 0; rep < 40; ++rep) {
    std::size_t nq = 2 + r.next_index(5);
    std::size_t nk = 3 + r.next_index(10);
    std::size_t d = 2 + r.next_index(5);
    matrix q = random_matrix(r, nq, d, -2.0, 2.0);
    matrix k = random_matrix(r, nk, d, -2.0, 2.0);
    matrix v = random_matrix(r, nk, d, -2.0, 2.0);
    condition_map map{attention_kind::self, 0, matrix(nq, nk)};
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < nk; ++j) map.values(i, j) = double(r.next_index(2));
      map.values(i, 0) = 1.0;  // keep every row mixed
      map.values(i, 1) = 0.0;
    }
    size_regularizer s{matrix(nq, nk)};
    for (double& x : s.values.data()) x = r.next_in(0.0, 0.9);

    std::vector<matrix> maps;
    for (double lambda : lambdas)
      maps.push_back(modulated_attention(q, k, v, map, s, lambda, d).attention_map);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t step = 1; step < lambdas.size(); ++step) {
        double before = row_mass_on_ones(maps[step - 1], map.values, i);
        double after = row_mass_on_ones(maps[step], map.values, i);
        CHECK(after > before);
      }
  }
}

TEST_CASE("per-row logit shifts leave the modulated map unchanged") {
  rng r(263);
  std::size_t d = 4;
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t nq = 1 + r.next_index(5);
    std::size_t nk = 2 + r.next_index(8);
    similarity_matrix sim{random_matrix(r, nq, nk, -3.0, 3.0)};
    similarity_matrix shifted = sim;
    for (std::size_t i = 0; i < nq; ++i) {
      double c = r.next_in(-5.0, 5.0);
      for (std::size_t j = 0; j < nk; ++j) shifted.values(i, j) += c;
    }
    condition_map map{attention_kind::self, 0, matrix(nq, nk)};
    for (double& x : map.values.data()) x = double(r.next_index(2));
    size_regularizer s{matrix(nq, nk)};
    for (double& x : s.values.data()) x = r.next_in(0.0, 0.9);

    auto full_map = [&](const similarity_matrix& sm) {
      matrix logits = sm.values;
      matrix bias = modulation_term(sm, map, s, 1.25);
      for (std::size_t i = 0; i < logits.size(); ++i)
        logits.data()[i] = (logits.data()[i] + bias.data()[i]) / std::sqrt(double(d));
      return softmax_rows(logits);
    };
    matrix a = full_map(sim);
    matrix b = full_map(shifted);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::abs(a.data()[i] - b.data()[i]) <= 1e-9);
  }
}

TEST_CASE("chunked attention reproduces the unchunked result") {
  rng r(269);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t nq = 7;
    std::size_t nk = 2 + r.next_index(8);
    std::size_t d = 1 + r.next_index(5);
    matrix q = random_matrix(r, nq, d, -2.0, 2.0);
    matrix k = random_matrix(r, nk, d, -2.0, 2.0);
    matrix v = random_matrix(r, nk, d, -2.0, 2.0);
    condition_map map{attention_kind::self, 0, matrix(nq, nk)};
    for (double& x : map.values.data()) x = double(r.next_index(2));
    size_regularizer s{matrix(nq, nk)};
    for (double& x : s.values.data()) x = r.next_in(0.0, 0.9);
    double lambda = r.next_in(0.0, 2.0);

    attention_output whole = modulated_attention(q, k, v, map, s, lambda, d);
    for (std::size_t chunk : {std::size_t(1), std::size_t(3), nq, nq + 5}) {
      attention_output part = sliced_modulated_attention(q, k, v, map, s, lambda, d, chunk);
      CHECK(part.attention_map == whole.attention_map);
      CHECK(part.attended == whole.attended);
    }
    CHECK_THROWS_AS(sliced_modulated_attention(q, k, v, map, s, lambda, d, 0),
                    validation_error);
  }
}
