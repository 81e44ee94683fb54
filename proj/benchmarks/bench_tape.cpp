#include <benchmark/benchmark.h>

#include "thinktuning/policy.hpp"
#include "thinktuning/tape.hpp"
#include "thinktuning/vocab.hpp"

using namespace thinktuning;

namespace {

std::vector<int> query_tokens(const Vocab& vocab, Rng& rng) {
  return {vocab.digit(static_cast<int>(rng.uniform_int(10))), vocab.plus(),
          vocab.digit(static_cast<int>(rng.uniform_int(10))), vocab.eq(), vocab.question()};
}

Trajectory make_traj(const Vocab& vocab, int len, Rng& rng) {
  Trajectory t;
  t.query = query_tokens(vocab, rng);
  for (int i = 0; i < len - 1; ++i)
    t.output.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab.size()))));
  t.output.push_back(vocab.eos());
  t.teacher_origin.assign(t.output.size(), 0);
  t.sampling_logprobs.assign(t.output.size(), 0.0);
  return t;
}

void bench_logprob_forward(benchmark::State& state) {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg;
  PolicyParams params = init_policy(vocab, cfg, 7);
  Rng rng(11);
  const Trajectory t = make_traj(vocab, static_cast<int>(state.range(0)), rng);

  for (auto _ : state) {
    benchmark::DoNotOptimize(logprobs(params, t));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bench_logprob_backward(benchmark::State& state) {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg;
  PolicyParams params = init_policy(vocab, cfg, 7);
  Rng rng(11);
  const Trajectory t = make_traj(vocab, static_cast<int>(state.range(0)), rng);

  for (auto _ : state) {
    Tape tape;
    PolicyLeaves leaves = PolicyLeaves::bind(tape, params);
    Var loss = mean(policy_logprob_rows(tape, leaves, params, t));
    tape.backward(loss);
    benchmark::DoNotOptimize(leaves.embedding.grad());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(bench_logprob_forward)->Arg(12)->Arg(48);
BENCHMARK(bench_logprob_backward)->Arg(12)->Arg(48);

BENCHMARK_MAIN();
