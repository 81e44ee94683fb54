#include "thinktuning/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include "thinktuning/rng.hpp"
#include "thinktuning/tasks.hpp"

namespace thinktuning {

EvalResult evaluate_greedy(const Vocab& vocab, const PolicyParams& params, const EvalConfig& cfg) {
  if (params.vocab_size != static_cast<int>(vocab.size())) {
    throw std::invalid_argument("evaluate_greedy: params vocab size does not match the vocab");
  }
  if (cfg.num_queries < 1) throw std::invalid_argument("evaluate_greedy: num_queries must be >= 1");
  if (cfg.difficulty < 1 || cfg.difficulty > 3) {
    throw std::invalid_argument("evaluate_greedy: difficulty must be in {1, 2, 3}");
  }
  if (cfg.max_len < 1) throw std::invalid_argument("evaluate_greedy: max_len must be >= 1");

  const RngKey root(cfg.seed);
  int correct = 0;
  std::int64_t token_sum = 0;
  int marked = 0;
  for (int i = 0; i < cfg.num_queries; ++i) {
    const Query query = gen_arithmetic(
        root.child(stream::kEval).child(static_cast<std::uint64_t>(i)).seed_value(),
        cfg.difficulty);
    Trajectory traj;
    traj.query = query.tokens;
    traj.output = greedy_decode(params, query.tokens, cfg.max_len, vocab.eos());
    traj.teacher_origin.assign(traj.output.size(), 0);
    traj.sampling_logprobs.assign(traj.output.size(), 0.0);

    const auto answer = extract_answer(vocab, traj);
    if (answer && *answer == query.answer) ++correct;
    token_sum += static_cast<std::int64_t>(traj.output.size());
    if (std::find(traj.output.begin(), traj.output.end(), vocab.marker()) != traj.output.end()) {
      ++marked;
    }
  }

  EvalResult result;
  result.num_queries = cfg.num_queries;
  result.num_correct = correct;
  result.accuracy = static_cast<double>(correct) / static_cast<double>(cfg.num_queries);
  result.mean_output_tokens = static_cast<double>(token_sum) / static_cast<double>(cfg.num_queries);
  result.marker_rate = static_cast<double>(marked) / static_cast<double>(cfg.num_queries);
  return result;
}

}  // namespace thinktuning
