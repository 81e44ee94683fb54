#include "thinktuning/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace thinktuning {

std::vector<std::size_t> select_subset(std::size_t n, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("select_subset: gamma outside [0,1]");
  if (n == 0) return {};

  auto count = static_cast<std::size_t>(
      std::floor(gamma * static_cast<double>(n) + 0.5));  // round half up
  count = std::min(count, n);
  if (gamma > 0.0 && count == 0) count = 1;

  // Partial Fisher-Yates over 0..n-1; first `count` entries are the sample.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Guidance make_guidance(const Vocab& vocab, const Query& query, const Trajectory& student,
                       const GuidanceConfig& cfg, Rng& rng) {
  const double wsum = cfg.behavior_weights[0] + cfg.behavior_weights[1] +
                      cfg.behavior_weights[2] + cfg.behavior_weights[3];
  if (!(wsum > 0.0)) throw std::invalid_argument("make_guidance: behavior weights sum to zero");
  for (double w : cfg.behavior_weights)
    if (w < 0.0) throw std::invalid_argument("make_guidance: negative behavior weight");

  std::vector<double> probs(4);
  for (int i = 0; i < 4; ++i) probs[static_cast<std::size_t>(i)] = cfg.behavior_weights[static_cast<std::size_t>(i)] / wsum;
  const auto behavior = static_cast<Behavior>(static_cast<int>(rng.categorical(probs)));

  const auto student_answer = extract_answer(vocab, student);
  const bool student_correct = student_answer && *student_answer == query.answer;

  long long answer_value = std::stoll(query.answer);
  if (cfg.fallibility > 0.0 && rng.uniform01() < cfg.fallibility)
    answer_value += 1;  // deliberately wrong worked answer

  const int reflect_count = cfg.header_len - 1 - (cfg.include_marker ? 1 : 0);
  if (reflect_count < 1)
    throw std::invalid_argument("make_guidance: header_len leaves no room for the reflection");

  Guidance g;
  g.behavior = behavior;
  g.tokens.push_back(vocab.opinion(student_correct));
  for (int i = 0; i < reflect_count; ++i)
    g.tokens.push_back(vocab.reflect(static_cast<int>(behavior)));
  if (cfg.include_marker) g.tokens.push_back(vocab.marker());
  // Worked re-derivation: the query expression without its trailing "?".
  for (std::size_t i = 0; i < query.tokens.size(); ++i) {
    if (i + 1 == query.tokens.size() && query.tokens[i] == vocab.question()) break;
    g.tokens.push_back(query.tokens[i]);
  }
  g.tokens.push_back(vocab.ans_open());
  const auto digits = int_to_tokens(vocab, answer_value);
  g.tokens.insert(g.tokens.end(), digits.begin(), digits.end());
  g.tokens.push_back(vocab.ans_close());
  // The demonstration is a complete response: it terminates the trajectory, so
  // the student also sees where to stop.
  g.tokens.push_back(vocab.eos());

  if (static_cast<int>(g.tokens.size()) > cfg.guidance_max_len)
    throw std::length_error("make_guidance: template exceeds guidance_max_len");
  return g;
}

Trajectory augment(const Trajectory& student, const std::vector<int>& guidance_tokens,
                   int eos_id, std::size_t max_total_len) {
  student.check_consistent();
  if (guidance_tokens.empty()) throw std::invalid_argument("augment: empty guidance");

  Trajectory t = student;
  if (!t.output.empty() && t.output.back() == eos_id) {
    t.output.pop_back();
    t.teacher_origin.pop_back();
    t.sampling_logprobs.pop_back();
  }
  if (t.output.size() + guidance_tokens.size() > max_total_len)
    throw std::length_error("augment: combined trajectory exceeds accounting limit");

  for (int tok : guidance_tokens) {
    t.output.push_back(tok);
    t.teacher_origin.push_back(1);
    t.sampling_logprobs.push_back(0.0);
  }
  t.augmented = true;
  return t;
}

std::vector<Trajectory> guide(const Vocab& vocab, const Query& query,
                              const PolicyParams& old_policy, const GuidanceConfig& cfg,
                              double gamma, int n, int max_len, double temperature,
                              const RngKey& key) {
  auto trajs = sample_rollouts(old_policy, query.tokens, n, max_len, temperature, vocab.eos(),
                               key.child(stream::kRollout));
  if (gamma == 0.0) return trajs;

  Rng select_rng = key.child(stream::kSubsetSelect).stream();
  const auto subset = select_subset(trajs.size(), gamma, select_rng);
  for (std::size_t i : subset) {
    Rng rng = key.child(stream::kBehavior).child(i).stream();
    const Guidance g = make_guidance(vocab, query, trajs[i], cfg, rng);
    trajs[i] = augment(trajs[i], g.tokens, vocab.eos(),
                       static_cast<std::size_t>(max_len) + static_cast<std::size_t>(cfg.guidance_max_len));
    // Old-policy log-probabilities of the injected tokens, for diagnostics.
    const auto lps = logprobs(old_policy, trajs[i]);
    for (std::size_t t = 0; t < trajs[i].output.size(); ++t)
      if (trajs[i].teacher_origin[t]) trajs[i].sampling_logprobs[t] = lps[t];
  }
  return trajs;
}

}  // namespace thinktuning
