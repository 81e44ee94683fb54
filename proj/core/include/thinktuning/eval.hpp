#pragma once

#include <cstdint>

#include "thinktuning/policy.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

struct EvalConfig {
  int num_queries = 200;
  int difficulty = 1;
  // Query stream seed; pick one outside the training seed to hold queries out.
  std::uint64_t seed = 1234;
  int max_len = 48;
};

struct EvalResult {
  int num_queries = 0;
  int num_correct = 0;
  double accuracy = 0.0;
  double mean_output_tokens = 0.0;  // greedy output length, EOS included
  double marker_rate = 0.0;         // generations containing the marker token
};

// Greedy-decodes one generation per query and scores the extracted answer
// against the ground truth. Deterministic in (params, cfg).
EvalResult evaluate_greedy(const Vocab& vocab, const PolicyParams& params, const EvalConfig& cfg);

}  // namespace thinktuning
