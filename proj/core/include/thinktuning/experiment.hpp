#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "thinktuning/eval.hpp"
#include "thinktuning/trainer.hpp"

namespace thinktuning {

// Two-arm behavior-instillation experiment. Both arms share base (seed,
// task, model, reward with the marker bonus enabled); the instilled arm
// trains with teacher guidance whose snippets carry the marker token, the
// control arm trains plain GRPO on the identical reward. Because the marker
// logit starts strongly suppressed, only guidance can realistically surface
// it, so the arms isolate what the teacher instills.
struct BehaviorExperimentConfig {
  TrainConfig base;
  int eval_queries = 200;
  std::uint64_t eval_seed = 1234;
};

struct ArmReport {
  std::string algo;
  EvalResult eval;
  double final_mean_reward = 0.0;
};

struct BehaviorExperimentReport {
  ArmReport instilled;  // ThinkTuning arm
  ArmReport control;    // GRPO arm
};

// Trains both arms under out_dir/instilled and out_dir/control, evaluates
// each final policy on the held-out query stream, and writes report.json.
BehaviorExperimentReport run_behavior_experiment(const BehaviorExperimentConfig& cfg,
                                                 const std::string& out_dir,
                                                 std::ostream* log = nullptr);

std::string behavior_report_json(const BehaviorExperimentReport& report);

}  // namespace thinktuning
