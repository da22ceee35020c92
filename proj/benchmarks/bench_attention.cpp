#include <benchmark/benchmark.h>

#include "stlayout/correspondence.hpp"
#include "stlayout/fixture.hpp"
#include "stlayout/numerics.hpp"
#include "stlayout/pipeline.hpp"
#include "stlayout/rng.hpp"
#include "stlayout/st_attention.hpp"

using namespace stlayout;

namespace {

matrix random_matrix(rng& r, std::size_t rows, std::size_t cols) {
  matrix m(rows, cols);
  for (double& x : m.data()) x = r.next_in(-1.0, 1.0);
  return m;
}

void bm_matmul(benchmark::State& state) {
  std::size_t n = std::size_t(state.range(0));
  rng r(1);
  matrix a = random_matrix(r, n, n);
  matrix b = random_matrix(r, n, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128);

void bm_softmax_rows(benchmark::State& state) {
  rng r(2);
  matrix logits = random_matrix(r, std::size_t(state.range(0)), 2048);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_rows(logits));
  }
}
BENCHMARK(bm_softmax_rows)->Arg(64)->Arg(256);

struct attention_case {
  matrix q, k, v;
  condition_map map;
  size_regularizer s;
  std::size_t head_dim;
};

attention_case make_case(std::size_t nq, std::size_t nk, std::size_t d) {
  rng r(3);
  attention_case c{random_matrix(r, nq, d), random_matrix(r, nk, d), random_matrix(r, nk, d),
                   condition_map{attention_kind::self, 0, matrix(nq, nk)},
                   size_regularizer{matrix(nq, nk)}, d};
  for (double& x : c.map.values.data()) x = double(r.next_index(2));
  for (double& x : c.s.values.data()) x = r.next_in(0.0, 0.9);
  return c;
}

void bm_attention_plain(benchmark::State& state) {
  attention_case c = make_case(256, 2048, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(attention(c.q, c.k, c.v, c.head_dim));
  }
}
BENCHMARK(bm_attention_plain);

void bm_attention_modulated(benchmark::State& state) {
  attention_case c = make_case(256, 2048, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(modulated_attention(c.q, c.k, c.v, c.map, c.s, 1.0, c.head_dim));
  }
}
BENCHMARK(bm_attention_modulated);

void bm_attention_sliced(benchmark::State& state) {
  attention_case c = make_case(256, 2048, 4);
  std::size_t chunk = std::size_t(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sliced_modulated_attention(c.q, c.k, c.v, c.map, c.s, 1.0, c.head_dim, chunk));
  }
}
BENCHMARK(bm_attention_sliced)->Arg(16)->Arg(64)->Arg(256);

void bm_condition_maps(benchmark::State& state) {
  fixture fx = generate_fixture(standard_fixture_spec());
  for (auto _ : state) {
    for (std::size_t f = 0; f < fx.layout.frames(); ++f) {
      benchmark::DoNotOptimize(build_self_condition_map(fx.layout, f));
    }
  }
}
BENCHMARK(bm_condition_maps);

void bm_denoiser_predict(benchmark::State& state) {
  fixture fx = generate_fixture(standard_fixture_spec());
  toy_denoiser denoiser(denoiser_config{});
  text_embedder embedder(5678, 16);
  token_attribute_map tokens =
      parse_token_map({{"base", 0}, {"boxy", 1}, {"ball", 2}}, fx.layout);
  matrix text = embedder.embed_tokens(tokens);
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoiser.predict(fx.features, text, nullptr));
  }
}
BENCHMARK(bm_denoiser_predict);

}  // namespace

BENCHMARK_MAIN();
