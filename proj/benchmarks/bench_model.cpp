#include <benchmark/benchmark.h>

#include <random>

#include "prefalign/align.hpp"

using namespace prefalign;

namespace {

ModelConfig bench_config(int d_model, int layers) {
  ModelConfig c;
  c.d_model = d_model;
  c.n_layers = layers;
  c.n_heads = 4;
  c.d_ff = 2 * d_model;
  c.max_seq_len = 64;
  c.seed = 1;
  return c;
}

TokenSequence tokens(std::mt19937_64& rng, std::size_t n) {
  TokenSequence s(n);
  for (auto& t : s) t = static_cast<int>(rng() % 256);
  return s;
}

PairBatch batch(std::size_t n) {
  std::mt19937_64 rng(7);
  PairBatch b;
  for (std::size_t i = 0; i < n; ++i) b.push_back({tokens(rng, 16), tokens(rng, 24), tokens(rng, 20)});
  return b;
}

void BM_SequenceScore(benchmark::State& state) {
  const PolicyModel m(bench_config(static_cast<int>(state.range(0)), 2));
  std::mt19937_64 rng(3);
  const auto x = tokens(rng, 16), y = tokens(rng, 32);
  for (auto _ : state) benchmark::DoNotOptimize(m.sequence_log_score(x, y));
}
BENCHMARK(BM_SequenceScore)->Arg(32)->Arg(64)->Arg(128);

void BM_DpoLossBackward(benchmark::State& state) {
  PolicyModel m(bench_config(64, 2));
  const ReferenceModel ref(m);
  auto b = batch(static_cast<std::size_t>(state.range(0)));
  cache_reference_scores(b, ref);
  AlignConfig cfg;
  for (auto _ : state) {
    m.zero_grad();
    benchmark::DoNotOptimize(dpo_loss(b, m, ref, cfg, true).total);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DpoLossBackward)->Arg(1)->Arg(8);

void BM_ForwardKl(benchmark::State& state) {
  const PolicyModel m(bench_config(64, 2));
  const ReferenceModel ref(m);
  std::mt19937_64 rng(5);
  const auto x = tokens(rng, 16), y = tokens(rng, 32);
  for (auto _ : state) benchmark::DoNotOptimize(forward_kl(m, ref, x, y));
}
BENCHMARK(BM_ForwardKl);

}  // namespace

BENCHMARK_MAIN();
