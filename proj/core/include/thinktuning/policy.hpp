#pragma once

#include <cstdint>
#include <vector>

#include "thinktuning/rng.hpp"
#include "thinktuning/tape.hpp"
#include "thinktuning/tensor.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

// One sampled (and possibly teacher-augmented) rollout. Output tokens include
// the terminating EOS when sampling stopped there; teacher_origin marks the
// positions appended by the teacher (the m_t mask), and sampling_logprobs
// holds the log-probability each token had when it entered the trajectory:
// for student tokens, under the sampling policy at the sampling temperature;
// for teacher tokens, the old policy's temperature-1 log-probability of the
// injected token in context (diagnostics only, never an importance ratio).
struct Trajectory {
  std::vector<int> query;
  std::vector<int> output;
  std::vector<std::uint8_t> teacher_origin;
  std::vector<double> sampling_logprobs;
  bool augmented = false;

  void check_consistent() const;  // throws on mismatched field lengths
};

// Model dimensions and init settings for the toy policy.
//
// The context encoder is a two-layer MLP over concatenated token embeddings
// drawn from two views of the prefix: the first query_width tokens (the
// episode's prologue — the query, padded or truncated to that width) and the
// last context_width tokens. Missing positions embed as zero vectors. The
// pinned prologue plays the role a transformer's attention over the prompt
// plays in a full-size model: the question stays visible no matter how long
// the generation runs, while the sliding view supplies recency.
// relu(x.W1 + b1).W2 + b2 gives a d-dimensional context vector, which the
// d x V output projection (plus a bias) maps to logits. The output bias
// exists so the marker token can start with a strongly negative logit: the
// behavior experiment needs the fresh policy to assign it negligible (but
// nonzero) probability, the way a base LLM treats an exact quoted phrase.
struct ModelConfig {
  int embed_dim = 16;
  int query_width = 9;  // pinned prologue slots; 9 fits the longest query
  int context_width = 16;
  int hidden_dim = 64;
  double init_std = 0.05;
  double marker_init_logit_bias = -18.0;
};

struct PolicyParams {
  int vocab_size = 0;
  int embed_dim = 0;
  int query_width = 0;
  int context_width = 0;
  int hidden_dim = 0;

  Tensor embedding;         // [V, d]
  Tensor enc_w1, enc_b1;    // [(Q+W)*d, h], [h]
  Tensor enc_w2, enc_b2;    // [h, d], [d]
  Tensor out_proj;          // [d, V]
  Tensor out_bias;          // [V]

  int window_slots() const { return query_width + context_width; }

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  static const std::vector<std::string>& tensor_names();
  std::int64_t param_count() const;
};

// Gaussian init scaled by init_std, biases zero (except the marker logit
// bias described above). Same seed, same dims -> bitwise identical params.
PolicyParams init_policy(const Vocab& vocab, const ModelConfig& cfg, std::uint64_t seed);

// Deep copy. PolicyParams is value-semantic so this is just a copy, but the
// trainer's old/reference snapshots read better through a named call.
PolicyParams snapshot(const PolicyParams& params);

// Context windows: one row per output position t over the prefix
// (query ++ output[0..t)). Each row holds query_width + context_width ids:
// the prefix's first query_width tokens (right-padded with -1), then its
// last context_width tokens (left-padded with -1).
std::vector<std::vector<std::int64_t>> make_context_windows(
    const std::vector<int>& query, const std::vector<int>& output, int query_width,
    int context_width);

// Plain-math forward path (no tape), used for sampling and for old/reference
// policy evaluations. Mirrors the tape path operation by operation.
std::vector<double> forward_logits(const PolicyParams& params,
                                   const std::vector<std::int64_t>& window);

// Next-token distribution for an arbitrary-length context prefix at
// temperature 1. Valid probabilities for every context: strictly positive,
// summing to 1.
std::vector<double> next_distribution(const PolicyParams& params,
                                      const std::vector<int>& context);

// Sample n rollouts from the policy. Each rollout ends at EOS or max_len,
// whichever comes first, and draws from its own rng stream (key.child(i)),
// so results are independent of evaluation order. Temperature rescales
// logits for sampling and for the recorded sampling log-probabilities;
// importance ratios elsewhere always use temperature-1 evaluations.
std::vector<Trajectory> sample_rollouts(const PolicyParams& params, const std::vector<int>& query,
                                        int n, int max_len, double temperature, int eos_id,
                                        const RngKey& key);

// Greedy decode (argmax, ties to the lowest id). Stops at EOS or max_len;
// the returned output includes the EOS token when one was produced.
std::vector<int> greedy_decode(const PolicyParams& params, const std::vector<int>& query,
                               int max_len, int eos_id);

// Per-token log-probabilities of a trajectory's output under the given
// params. Produces the same values whether the trajectory came from
// sample_rollouts or was constructed by hand.
std::vector<double> logprobs(const PolicyParams& params, const Trajectory& traj,
                             double temperature = 1.0);

// Differentiable path: bind params as tape leaves, then build the [T, V]
// logits (or [T] target log-probabilities) for a batch of context windows.
struct PolicyLeaves {
  Var embedding, enc_w1, enc_b1, enc_w2, enc_b2, out_proj, out_bias;

  static PolicyLeaves bind(Tape& tape, const PolicyParams& params);
  std::vector<Var> list() const;
};

Var policy_logits_rows(Tape& tape, const PolicyLeaves& leaves, int window_slots, int embed_dim,
                       const std::vector<std::vector<std::int64_t>>& windows);

Var policy_logprob_rows(Tape& tape, const PolicyLeaves& leaves, const PolicyParams& params,
                        const Trajectory& traj);

}  // namespace thinktuning
