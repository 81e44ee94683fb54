#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thinktuning/policy.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

// A tokenized problem instance with its ground-truth answer string.
struct Query {
  std::vector<int> tokens;
  std::string answer;
  int difficulty = 1;
};

// Deterministic addition problem "a+b=?". difficulty in {1,2,3} sets the
// operand digit count exactly: 1 draws uniformly from [0,9], 2 from [10,99],
// 3 from [100,999].
Query gen_arithmetic(std::uint64_t seed, int difficulty);

// Token span between the LAST answer-open delimiter and the next answer-close
// delimiter, concatenated as strings. nullopt when no such pair exists.
std::optional<std::string> extract_answer(const Vocab& vocab, const Trajectory& traj);

struct RewardSpec {
  double correctness_weight = 1.0;
  double marker_bonus = 0.5;   // only paid when marker_bonus_enabled
  bool marker_bonus_enabled = false;
  double reward_offset = 0.0;  // added to every reward; exercises shift invariance
};

// Composite scalar reward: correctness_weight for an exact answer match plus
// marker_bonus when the marker token occurs anywhere in the output tokens
// (teacher-injected or not), plus the constant offset.
double reward(const Vocab& vocab, const Trajectory& traj, const Query& query,
              const RewardSpec& spec);

// Render an integer as digit tokens (e.g. 42 -> ["4","2"]); negative values
// get a leading minus token.
std::vector<int> int_to_tokens(const Vocab& vocab, long long value);

}  // namespace thinktuning
