#include <benchmark/benchmark.h>

#include "prefalign/corpus.hpp"
#include "prefalign/model.hpp"
#include "prefalign/sandbox.hpp"

using namespace prefalign;

namespace {

void BM_PassAtK(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    double acc = 0;
    for (int c = 0; c <= n; ++c) acc += pass_at_k(n, c, n / 2 + 1);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_PassAtK)->Arg(8)->Arg(200);

void BM_Lex(benchmark::State& state) {
  const std::string& src = reference_solution(ProblemId::TicTacToe, Language::Cpp);
  for (auto _ : state) benchmark::DoNotOptimize(tokenize(src, Language::Cpp));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(src.size()));
}
BENCHMARK(BM_Lex);

void BM_Augment(benchmark::State& state) {
  SourceProgram p;
  p.id = "tictactoe";
  p.problem = ProblemId::TicTacToe;
  p.text = reference_solution(ProblemId::TicTacToe, Language::Cpp);
  AugmentConfig cfg;
  cfg.variants_per_program = 4;
  for (auto _ : state) benchmark::DoNotOptimize(augment_corpus({p}, cfg));
}
BENCHMARK(BM_Augment);

void BM_Encode(benchmark::State& state) {
  const auto v = Vocabulary::byte_level();
  const std::string& src = reference_solution(ProblemId::MinStack, Language::Python);
  for (auto _ : state) benchmark::DoNotOptimize(v.encode(src));
}
BENCHMARK(BM_Encode);

}  // namespace
