#include <benchmark/benchmark.h>

#include "thinktuning/trainer.hpp"

using namespace thinktuning;

namespace {

TrainConfig bench_cfg(const char* algo) {
  TrainConfig cfg;
  cfg.algo = algo;
  cfg.total_steps = 1u << 20;  // never reached; the benchmark drives steps
  cfg.batch_size = 4;
  cfg.group_size = 8;
  cfg.mini_batch_size = 2;
  cfg.cutoff_step = 1 << 20;  // keep gamma at gamma0 throughout
  cfg.max_len = 12;
  return cfg;
}

void bench_train_step(benchmark::State& state, const char* algo) {
  Trainer trainer(bench_cfg(algo));
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.step());
  }
  state.SetItemsProcessed(state.iterations());
}

void bench_step_thinktuning(benchmark::State& state) { bench_train_step(state, "thinktuning"); }
void bench_step_grpo(benchmark::State& state) { bench_train_step(state, "grpo"); }

}  // namespace

BENCHMARK(bench_step_thinktuning)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_step_grpo)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
