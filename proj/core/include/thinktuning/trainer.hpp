#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "thinktuning/advantage.hpp"
#include "thinktuning/objective.hpp"
#include "thinktuning/optimizer.hpp"
#include "thinktuning/policy.hpp"
#include "thinktuning/tasks.hpp"
#include "thinktuning/teacher.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

// Invalid or inconsistent run configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loss or a parameter became non-finite; the message carries a diagnostic
// dump of the step's groups so the failure can be reproduced and inspected.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskConfig {
  std::string task = "arithmetic";
  int difficulty = 1;
  RewardSpec reward;
};

// Full description of a training run. Every field has a default so an empty
// config file is a valid (if tiny) run once total_steps is set.
struct TrainConfig {
  std::string algo = "thinktuning";  // "thinktuning" or "grpo"
  std::uint64_t seed = 42;
  std::int64_t total_steps = 500;
  int batch_size = 8;       // queries per outer step
  int group_size = 16;      // rollouts per query (n)
  int mini_batch_size = 2;  // queries per inner update
  int inner_epochs = 0;     // 0 = batch_size / mini_batch_size
  double gamma0 = 0.75;          // initial guided fraction
  std::int64_t cutoff_step = -1;  // -1 = total_steps / 5
  int max_len = 24;              // rollout length cap (tokens)
  double temperature = 1.0;      // sampling temperature
  std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only
  double eps_std = 1e-6;
  ExtremaMode extrema_mode = ExtremaMode::kRealized;

  ModelConfig model;
  OptimConfig optim;
  ShapingConfig shaping;
  ClipKLConfig clip_kl;
  GuidanceConfig teacher;
  TaskConfig task;

  // Throws ConfigError on any out-of-range or inconsistent field.
  void validate() const;

  // Guidance cutoff step k with the -1 default resolved.
  std::int64_t cutoff() const;

  // Number of optimizer updates per outer step.
  int inner_updates() const;
};

// Linear decay: gamma0 * (1 - step/k) for step < k, exactly 0 afterwards.
double schedule_gamma(std::int64_t step, double gamma0, std::int64_t k);

// Aggregates of one outer step, written as one metrics line.
struct StepMetrics {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double mean_advantage = 0.0;
  double mean_output_tokens = 0.0;
  double gamma = 0.0;
  double aug_fraction = 0.0;    // augmented trajectories / all trajectories
  double mean_ratio = 0.0;      // importance ratio over student tokens
  double clip_rate = 0.0;       // student tokens outside the clip band
  double aas_mask_rate = 0.0;   // teacher tokens dropped by the shaping mask
  double kl = 0.0;              // mean per-trajectory KL estimate
  double loss = 0.0;            // mean loss over the step's inner updates
};

class Trainer {
 public:
  // Everything needed to continue a run exactly where another left off.
  struct RunState {
    PolicyParams policy;
    PolicyParams reference;
    Adam::State adam;
    std::int64_t step = 0;
  };

  // Fresh run: policy initialized from cfg.seed, reference = initial policy.
  explicit Trainer(const TrainConfig& cfg);

  // Continue from an exported state (policy, reference, optimizer moments).
  Trainer(const TrainConfig& cfg, RunState state);

  // Runs one outer step: sample groups (guided if scheduled), score, shuffle
  // the trajectory buffer, and apply the inner optimizer updates.
  StepMetrics step();

  const TrainConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const PolicyParams& policy() const { return policy_; }
  const PolicyParams& reference() const { return reference_; }
  std::int64_t current_step() const { return step_; }

  RunState export_state() const;

 private:
  Group collect_group(std::int64_t step, int slot, const PolicyParams& old,
                      double gamma) const;

  TrainConfig cfg_;
  Vocab vocab_;
  PolicyParams policy_;
  PolicyParams reference_;
  Adam adam_;
  std::int64_t step_ = 0;
};

// Drives an existing trainer from its current step to total_steps, writing
// config.json, metrics.jsonl, and checkpoints/ under out_dir (the final
// policy always lands in checkpoints/final.json). Progress lines go to *log
// when non-null. Returns the last step's metrics (zero-initialized when no
// step ran).
StepMetrics run_and_record(Trainer& trainer, const std::string& out_dir,
                           std::ostream* log = nullptr);

// Fresh run of cfg under out_dir. Returns the number of steps run.
std::int64_t run_training(const TrainConfig& cfg, const std::string& out_dir,
                          std::ostream* log = nullptr);

}  // namespace thinktuning
