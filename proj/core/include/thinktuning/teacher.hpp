#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "thinktuning/policy.hpp"
#include "thinktuning/rng.hpp"
#include "thinktuning/tasks.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

// The four reflective behaviors a guidance snippet can model, expressed as
// first-person phrase tokens: doubting one's own answer, checking one's own
// steps, confirming agreement, and asking oneself for a second opinion.
enum class Behavior : int {
  kSelfConflict = 0,
  kSelfCritique = 1,
  kSelfAgreement = 2,
  kSelfConsultancy = 3,
};

struct GuidanceConfig {
  std::array<double, 4> behavior_weights{1.0, 1.0, 1.0, 1.0};
  bool include_marker = false;
  int guidance_max_len = 32;
  // Total length of the header (opinion + reflection phrase + optional
  // marker). The reflect token repeats to fill it, so the re-derivation and
  // answer sit at fixed distances from the end of the header no matter what
  // precedes it. 11 parks a single-digit re-derivation plus <ans> flush
  // against a 16-token context window: the demonstrated answer tokens then
  // never share the window with the student's earlier output.
  int header_len = 11;
  // Probability that the worked answer is wrong (off by one). 0 = oracle.
  double fallibility = 0.0;
};

struct Guidance {
  std::vector<int> tokens;
  Behavior behavior;
};

// Uniform sample without replacement of round-half-up(gamma*n) indices,
// clamped to [0, n] and forced to at least 1 whenever gamma > 0 and n > 0.
// Returned indices are sorted ascending. gamma outside [0,1] throws.
std::vector<std::size_t> select_subset(std::size_t n, double gamma, Rng& rng);

// Scripted teacher turn for one student rollout: an opinion token reflecting
// whether the student's extracted answer was correct, the behavior's
// reflective phrase (its reflect token repeated to pad the header to
// header_len), optionally the marker token, then a worked re-derivation of
// the query ending in <ans> answer </ans> EOS: a complete, terminated
// response, so stopping is part of what gets demonstrated. The rng drives
// the behavior draw and, if fallibility > 0, the wrong-answer draw.
Guidance make_guidance(const Vocab& vocab, const Query& query, const Trajectory& student,
                       const GuidanceConfig& cfg, Rng& rng);

// Append guidance to a student rollout: strips the student's trailing EOS,
// marks appended positions as teacher origin, sets the augmented flag.
// Throws if the combined length exceeds max_total_len. The teacher-token
// logprob slots are zeroed; guide() fills them from the old policy.
Trajectory augment(const Trajectory& student, const std::vector<int>& guidance_tokens,
                   int eos_id, std::size_t max_total_len);

// Full rollout-collection step for one query: sample n rollouts from the old
// policy, pick the guided subset, and augment each selected rollout with a
// fresh teacher turn. Rollout order is preserved; with gamma == 0 the result
// is byte-identical to plain sample_rollouts on the same key.
std::vector<Trajectory> guide(const Vocab& vocab, const Query& query,
                              const PolicyParams& old_policy, const GuidanceConfig& cfg,
                              double gamma, int n, int max_len, double temperature,
                              const RngKey& key);

}  // namespace thinktuning
