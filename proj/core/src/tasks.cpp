#include "thinktuning/tasks.hpp"

#include <stdexcept>

#include "thinktuning/rng.hpp"

namespace thinktuning {

std::vector<int> int_to_tokens(const Vocab& vocab, long long value) {
  std::vector<int> out;
  const std::string s = std::to_string(value);
  for (char c : s) {
    if (c == '-')
      out.push_back(vocab.id_of("-"));
    else
      out.push_back(vocab.digit(c - '0'));
  }
  return out;
}

Query gen_arithmetic(std::uint64_t seed, int difficulty) {
  if (difficulty < 1 || difficulty > 3)
    throw std::invalid_argument("gen_arithmetic: difficulty must be 1, 2, or 3");
  const Vocab vocab = Vocab::standard();
  Rng rng(RngKey(seed).child(stream::kTaskGen).child(static_cast<std::uint64_t>(difficulty))
              .stream());

  // Operands have exactly `difficulty` digits (difficulty 1 includes 0).
  std::uint64_t hi = 1;
  for (int i = 0; i < difficulty; ++i) hi *= 10;
  const std::uint64_t lo = difficulty == 1 ? 0 : hi / 10;
  const auto a = static_cast<long long>(lo + rng.uniform_int(hi - lo));
  const auto b = static_cast<long long>(lo + rng.uniform_int(hi - lo));

  Query q;
  q.difficulty = difficulty;
  auto ta = int_to_tokens(vocab, a);
  auto tb = int_to_tokens(vocab, b);
  q.tokens.insert(q.tokens.end(), ta.begin(), ta.end());
  q.tokens.push_back(vocab.plus());
  q.tokens.insert(q.tokens.end(), tb.begin(), tb.end());
  q.tokens.push_back(vocab.eq());
  q.tokens.push_back(vocab.question());
  q.answer = std::to_string(a + b);
  return q;
}

std::optional<std::string> extract_answer(const Vocab& vocab, const Trajectory& traj) {
  const auto& out = traj.output;
  std::ptrdiff_t open = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(out.size()) - 1; i >= 0; --i)
    if (out[static_cast<std::size_t>(i)] == vocab.ans_open()) {
      open = i;
      break;
    }
  if (open < 0) return std::nullopt;
  std::ptrdiff_t close = -1;
  for (std::size_t i = static_cast<std::size_t>(open) + 1; i < out.size(); ++i)
    if (out[i] == vocab.ans_close()) {
      close = static_cast<std::ptrdiff_t>(i);
      break;
    }
  if (close < 0) return std::nullopt;
  std::string s;
  for (std::ptrdiff_t i = open + 1; i < close; ++i)
    s += vocab.token(out[static_cast<std::size_t>(i)]);
  return s;
}

double reward(const Vocab& vocab, const Trajectory& traj, const Query& query,
              const RewardSpec& spec) {
  double r = spec.reward_offset;
  const auto ans = extract_answer(vocab, traj);
  if (ans && *ans == query.answer) r += spec.correctness_weight;
  if (spec.marker_bonus_enabled) {
    for (int tok : traj.output)
      if (tok == vocab.marker()) {
        r += spec.marker_bonus;
        break;
      }
  }
  return r;
}

}  // namespace thinktuning
