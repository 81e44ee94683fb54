#pragma once

#include <cstdint>
#include <vector>

#include "thinktuning/advantage.hpp"
#include "thinktuning/policy.hpp"
#include "thinktuning/tape.hpp"

namespace thinktuning {

// Advantage-aware shaping parameters. c interpolates linearly from c1 at the
// group's maximum advantage to c2 at its minimum; with c1 > 0 > c2 this
// damps updates on already-favored teacher tokens and amplifies pressure
// against confidently wrong ones. The mask drops teacher tokens that need no
// update at all: already confident and positively advantaged, or already
// improbable and negatively advantaged. Both bounds are strict, so a token
// at exactly mask_high (or mask_low) stays included.
struct ShapingConfig {
  double c1 = 1e-4;
  double c2 = -1e-4;
  double mask_high = 0.9999;
  double mask_low = 0.0001;
};

struct ClipKLConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.001;
  // Apply the per-token KL penalty to teacher-origin tokens too (default) or
  // to student tokens only.
  bool kl_on_teacher_tokens = true;
};

// Scalar reference forms of the loss ingredients. The tape-built loss uses
// the same formulas through tape ops; tests pin both against each other.
double importance_ratio(double cur_lp, double old_lp);
double clipped_term(double w, double advantage, double clip_eps);
double kl_k3(double cur_lp, double ref_lp);

// c(A) = c1 + (c2-c1) * (a_max - A) / (a_max - a_min); the degenerate
// a_max == a_min case returns the midpoint (c1+c2)/2. A outside
// [a_min, a_max] throws.
double shaping_coeff(double advantage, double a_min, double a_max, double c1, double c2);

// False exactly when (prob > mask_high and advantage > 0) or
// (prob < mask_low and advantage < 0).
bool aas_included(double prob, double advantage, const ShapingConfig& cfg);

// w_aas = prob / (stop_gradient(prob) + c). Forward value is prob/(prob+c);
// the gradient contract is d w_aas / d theta = (1/(prob+c)) * d prob / d
// theta, the denominator held constant. Throws if any prob + c <= 0, which
// the masking rules are meant to make unreachable.
Var aas_weight(Tape& tape, Var prob, double c);
double aas_weight_value(double prob, double c);

// Closed-form gradient of aas_weight with respect to the logits feeding the
// softmax that produced `probs`: g(v) = (M/D) * (1[v==target] - probs[v])
// with M = probs[target], D = M + c. Used as the independent check against
// the autodiff path.
std::vector<double> per_logit_grad_oracle(const std::vector<double>& probs, int target, double c);

// Diagnostics accumulated while assembling a loss.
struct LossStats {
  std::int64_t student_tokens = 0;
  std::int64_t teacher_tokens = 0;
  std::int64_t masked_tokens = 0;
  std::int64_t clip_active = 0;  // student tokens in the clip dead zone
  double ratio_sum = 0.0;        // sum of importance ratios over student tokens
  double kl_sum = 0.0;           // sum over trajectories of per-trajectory mean k3
  std::int64_t trajectories = 0;
  double value = 0.0;            // forward loss value

  double mean_ratio() const { return student_tokens ? ratio_sum / static_cast<double>(student_tokens) : 0.0; }
  double clip_rate() const { return student_tokens ? static_cast<double>(clip_active) / static_cast<double>(student_tokens) : 0.0; }
  double mask_rate() const { return teacher_tokens ? static_cast<double>(masked_tokens) / static_cast<double>(teacher_tokens) : 0.0; }
  double mean_kl() const { return trajectories ? kl_sum / static_cast<double>(trajectories) : 0.0; }
};

struct LossResult {
  Var loss;
  PolicyLeaves leaves;
  LossStats stats;
};

// One trajectory's loss inputs: its group advantage and extrema plus the
// frozen old/reference per-token log-probabilities (temperature 1). The
// pointers must stay valid while the loss is alive.
struct TrajView {
  const Trajectory* traj = nullptr;
  double advantage = 0.0;
  double a_min = 0.0, a_max = 0.0;
  const std::vector<double>* old_lps = nullptr;
  const std::vector<double>* ref_lps = nullptr;
};

enum class LossKind { kThinkTuning, kGrpo };

// Core builder over an explicit trajectory set (the trainer's mini-batches).
// Loss = -(1/N) sum_i [ (1/|o_i|_eff) sum_t surrogate_t
//                       - kl_beta * (1/|o_i|) sum_t k3_t ].
// Student and unaugmented tokens use the clipped importance-sampled
// surrogate; teacher tokens of augmented trajectories (ThinkTuning kind
// only) use the advantage-aware weight, with masked teacher tokens dropped
// from both the surrogate sum and the |o_i|_eff count. The KL term covers
// every token (including masked ones) and divides by the covered count.
// Trajectories with no output tokens, or with every token masked, put 0 in
// the surrogate average. kGrpo treats every token as a student token.
LossResult loss_from_views(Tape& tape, const PolicyParams& cur, const std::vector<TrajView>& views,
                           LossKind kind, const ShapingConfig& shaping, const ClipKLConfig& clip_kl);

// Group-level entry points matching the training objectives. old/reference
// log-probabilities are evaluated internally from the given policies.
LossResult thinktuning_loss(Tape& tape, const std::vector<Group>& groups, const PolicyParams& cur,
                            const PolicyParams& old_policy, const PolicyParams& ref_policy,
                            const ShapingConfig& shaping, const ClipKLConfig& clip_kl);
LossResult grpo_loss(Tape& tape, const std::vector<Group>& groups, const PolicyParams& cur,
                     const PolicyParams& old_policy, const PolicyParams& ref_policy,
                     const ClipKLConfig& clip_kl);

}  // namespace thinktuning
