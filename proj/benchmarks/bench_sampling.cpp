#include <benchmark/benchmark.h>

#include "thinktuning/policy.hpp"
#include "thinktuning/tasks.hpp"
#include "thinktuning/vocab.hpp"

using namespace thinktuning;

namespace {

void bench_sample_rollouts(benchmark::State& state) {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg;
  PolicyParams params = init_policy(vocab, cfg, 7);
  const Query q = gen_arithmetic(3, 1);
  const int n = static_cast<int>(state.range(0));
  const int max_len = static_cast<int>(state.range(1));

  std::uint64_t salt = 0;
  std::int64_t tokens = 0;
  for (auto _ : state) {
    const RngKey key = RngKey(123).child(salt++);
    auto rollouts = sample_rollouts(params, q.tokens, n, max_len, 1.0, vocab.eos(), key);
    for (const Trajectory& t : rollouts) tokens += static_cast<std::int64_t>(t.output.size());
    benchmark::DoNotOptimize(rollouts);
  }
  state.SetItemsProcessed(tokens);
}

void bench_greedy_decode(benchmark::State& state) {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg;
  PolicyParams params = init_policy(vocab, cfg, 7);
  const Query q = gen_arithmetic(3, 1);

  std::int64_t tokens = 0;
  for (auto _ : state) {
    std::vector<int> out = greedy_decode(params, q.tokens, static_cast<int>(state.range(0)), vocab.eos());
    tokens += static_cast<std::int64_t>(out.size());
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(tokens);
}

}  // namespace

BENCHMARK(bench_sample_rollouts)->Args({16, 12})->Args({16, 48});
BENCHMARK(bench_greedy_decode)->Arg(12)->Arg(48);

BENCHMARK_MAIN();
