#include "thinktuning/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <utility>

#include "thinktuning/checkpoint.hpp"
#include "thinktuning/config.hpp"
#include "thinktuning/metrics.hpp"
#include "thinktuning/rng.hpp"
#include "thinktuning/tape.hpp"

namespace thinktuning {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

const TrainConfig& validated(const TrainConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

void TrainConfig::validate() const {
  require(algo == "thinktuning" || algo == "grpo", "algo must be \"thinktuning\" or \"grpo\"");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(group_size >= 2, "group_size must be >= 2 (advantages are group-standardized)");
  require(mini_batch_size >= 1, "mini_batch_size must be >= 1");
  require(mini_batch_size <= batch_size, "mini_batch_size must not exceed batch_size");
  require(inner_epochs >= 0, "inner_epochs must be >= 0 (0 derives batch_size / mini_batch_size)");
  require(gamma0 >= 0.0 && gamma0 <= 1.0, "gamma0 must be in [0, 1]");
  require(cutoff_step >= -1, "cutoff_step must be -1 (auto) or >= 0");
  require(max_len >= 1, "max_len must be >= 1");
  require(temperature > 0.0, "temperature must be > 0");
  require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  require(eps_std > 0.0, "eps_std must be > 0");

  require(model.embed_dim >= 1, "model.embed_dim must be >= 1");
  require(model.context_width >= 1, "model.context_width must be >= 1");
  require(model.hidden_dim >= 1, "model.hidden_dim must be >= 1");
  require(model.init_std > 0.0, "model.init_std must be > 0");
  require(std::isfinite(model.marker_init_logit_bias), "model.marker_init_logit_bias must be finite");

  require(optim.kind == "adam", "optim.kind must be \"adam\"");
  require(optim.lr > 0.0, "optim.lr must be > 0");
  require(optim.beta1 >= 0.0 && optim.beta1 < 1.0, "optim.beta1 must be in [0, 1)");
  require(optim.beta2 >= 0.0 && optim.beta2 < 1.0, "optim.beta2 must be in [0, 1)");
  require(optim.eps > 0.0, "optim.eps must be > 0");

  require(std::isfinite(shaping.c1) && std::isfinite(shaping.c2),
          "shaping.c1 and shaping.c2 must be finite");
  require(shaping.mask_low > 0.0 && shaping.mask_low < shaping.mask_high && shaping.mask_high < 1.0,
          "shaping mask thresholds must satisfy 0 < mask_low < mask_high < 1");

  require(clip_kl.clip_eps > 0.0 && clip_kl.clip_eps < 1.0, "clip_eps must be in (0, 1)");
  require(clip_kl.kl_beta >= 0.0, "kl_beta must be >= 0");

  double weight_sum = 0.0;
  for (double w : teacher.behavior_weights) {
    require(w >= 0.0 && std::isfinite(w), "behavior weights must be finite and >= 0");
    weight_sum += w;
  }
  require(weight_sum > 0.0, "behavior weights must not all be zero");
  require(teacher.guidance_max_len >= 1, "guidance_max_len must be >= 1");
  require(teacher.fallibility >= 0.0 && teacher.fallibility <= 1.0,
          "fallibility must be in [0, 1]");

  require(task.task == "arithmetic", "task.task must be \"arithmetic\"");
  require(task.difficulty >= 1 && task.difficulty <= 3, "task.difficulty must be in {1, 2, 3}");
  require(std::isfinite(task.reward.correctness_weight) && std::isfinite(task.reward.marker_bonus) &&
              std::isfinite(task.reward.reward_offset),
          "reward weights must be finite");
}

std::int64_t TrainConfig::cutoff() const {
  return cutoff_step >= 0 ? cutoff_step : total_steps / 5;
}

int TrainConfig::inner_updates() const {
  return inner_epochs > 0 ? inner_epochs : std::max(1, batch_size / mini_batch_size);
}

double schedule_gamma(std::int64_t step, double gamma0, std::int64_t k) {
  if (step < 0) throw std::invalid_argument("schedule_gamma: step must be >= 0");
  if (k <= 0 || step >= k) return 0.0;
  return gamma0 * (1.0 - static_cast<double>(step) / static_cast<double>(k));
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(validated(cfg)),
      vocab_(Vocab::standard()),
      policy_(init_policy(vocab_, cfg_.model, cfg_.seed)),
      reference_(snapshot(policy_)),
      adam_(cfg_.optim, policy_) {}

Trainer::Trainer(const TrainConfig& cfg, RunState state)
    : cfg_(validated(cfg)),
      vocab_(Vocab::standard()),
      policy_(std::move(state.policy)),
      reference_(std::move(state.reference)),
      adam_(cfg_.optim, policy_),
      step_(state.step) {
  if (policy_.vocab_size != static_cast<int>(vocab_.size()) ||
      policy_.embed_dim != cfg_.model.embed_dim ||
      policy_.context_width != cfg_.model.context_width ||
      policy_.hidden_dim != cfg_.model.hidden_dim) {
    throw ConfigError("Trainer: run state dimensions do not match the model config");
  }
  if (state.step < 0) throw ConfigError("Trainer: run state step must be >= 0");
  adam_.set_state(std::move(state.adam));
}

Trainer::RunState Trainer::export_state() const {
  return RunState{snapshot(policy_), snapshot(reference_), adam_.state(), step_};
}

Group Trainer::collect_group(std::int64_t step, int slot, const PolicyParams& old,
                             double gamma) const {
  const RngKey root(cfg_.seed);
  const auto u_step = static_cast<std::uint64_t>(step);
  const auto u_slot = static_cast<std::uint64_t>(slot);

  Group group;
  group.query = gen_arithmetic(
      root.child(stream::kTaskGen).child(u_step).child(u_slot).seed_value(), cfg_.task.difficulty);

  // guide() derives its rollout streams from slot_key.child(kRollout), so the
  // unguided branch draws from the very same streams: a run whose schedule
  // has reached gamma == 0 continues bit-for-bit like a plain-GRPO run.
  const RngKey slot_key = root.child(stream::kRollout).child(u_step).child(u_slot);
  if (gamma > 0.0) {
    group.trajectories = guide(vocab_, group.query, old, cfg_.teacher, gamma, cfg_.group_size,
                               cfg_.max_len, cfg_.temperature, slot_key);
  } else {
    group.trajectories = sample_rollouts(old, group.query.tokens, cfg_.group_size, cfg_.max_len,
                                         cfg_.temperature, vocab_.eos(), slot_key.child(stream::kRollout));
  }

  compute_rewards(vocab_, group, cfg_.task.reward);
  normalize_advantages(group, cfg_.eps_std, cfg_.extrema_mode);
  return group;
}

namespace {

std::string divergence_dump(std::int64_t step, int inner, const Vocab& vocab,
                            const std::vector<Group>& groups, const std::string& what) {
  std::ostringstream os;
  os << "training diverged at step " << step << ", inner update " << inner << ": " << what << "\n";
  os << std::setprecision(17);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const Group& grp = groups[g];
    os << "group " << g << " query \"" << vocab.render(grp.query.tokens) << "\" answer "
       << grp.query.answer << "\n";
    for (std::size_t i = 0; i < grp.trajectories.size(); ++i) {
      const Trajectory& t = grp.trajectories[i];
      os << "  rollout " << i << ": len " << t.output.size() << (t.augmented ? " (augmented)" : "")
         << " reward " << grp.rewards[i] << " advantage " << grp.advantages[i] << "\n";
    }
  }
  return os.str();
}

}  // namespace

StepMetrics Trainer::step() {
  const std::int64_t step = step_;
  const PolicyParams old = snapshot(policy_);
  const bool thinktuning = cfg_.algo == "thinktuning";
  const double gamma = thinktuning ? schedule_gamma(step, cfg_.gamma0, cfg_.cutoff()) : 0.0;

  std::vector<Group> groups;
  groups.reserve(static_cast<std::size_t>(cfg_.batch_size));
  for (int slot = 0; slot < cfg_.batch_size; ++slot) {
    groups.push_back(collect_group(step, slot, old, gamma));
  }

  // Freeze per-token old/reference log-probs once per outer step; inner
  // updates recompute only the current policy's side.
  struct Slot {
    const Trajectory* traj;
    double advantage, a_min, a_max, reward;
    std::vector<double> old_lps, ref_lps;
  };
  std::vector<Slot> buffer;
  buffer.reserve(groups.size() * static_cast<std::size_t>(cfg_.group_size));
  double reward_sum = 0.0, advantage_sum = 0.0, token_sum = 0.0;
  std::int64_t augmented = 0;
  for (const Group& group : groups) {
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      buffer.push_back(Slot{&traj, group.advantages[i], group.a_min, group.a_max, group.rewards[i],
                            logprobs(old, traj), logprobs(reference_, traj)});
      reward_sum += group.rewards[i];
      advantage_sum += group.advantages[i];
      token_sum += static_cast<double>(traj.output.size());
      augmented += traj.augmented ? 1 : 0;
    }
  }
  const auto total = static_cast<double>(buffer.size());

  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = RngKey(cfg_.seed).child(stream::kShuffle).child(static_cast<std::uint64_t>(step)).stream();
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
  }

  const int updates = cfg_.inner_updates();
  LossStats agg;
  double loss_sum = 0.0;
  int chunks_run = 0;
  for (int c = 0; c < updates; ++c) {
    const std::size_t lo = buffer.size() * static_cast<std::size_t>(c) / static_cast<std::size_t>(updates);
    const std::size_t hi = buffer.size() * static_cast<std::size_t>(c + 1) / static_cast<std::size_t>(updates);
    if (lo == hi) continue;

    std::vector<TrajView> views;
    views.reserve(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
      const Slot& s = buffer[order[k]];
      views.push_back(TrajView{s.traj, s.advantage, s.a_min, s.a_max, &s.old_lps, &s.ref_lps});
    }

    try {
      Tape tape;
      LossResult res = loss_from_views(tape, policy_, views,
                                       thinktuning ? LossKind::kThinkTuning : LossKind::kGrpo,
                                       cfg_.shaping, cfg_.clip_kl);
      const double loss_value = res.loss.value().data[0];
      if (!std::isfinite(loss_value)) {
        throw std::range_error("loss value is not finite");
      }
      tape.backward(res.loss);

      std::vector<Tensor> grads;
      grads.reserve(7);
      for (const Var& leaf : res.leaves.list()) grads.push_back(leaf.grad());
      adam_.update(policy_, grads);
      for (const Tensor* t : policy_.tensors()) {
        if (!t->all_finite()) throw std::range_error("a parameter became non-finite");
      }

      const LossStats& s = res.stats;
      agg.student_tokens += s.student_tokens;
      agg.teacher_tokens += s.teacher_tokens;
      agg.masked_tokens += s.masked_tokens;
      agg.clip_active += s.clip_active;
      agg.ratio_sum += s.ratio_sum;
      agg.kl_sum += s.kl_sum;
      agg.trajectories += s.trajectories;
      loss_sum += loss_value;
      ++chunks_run;
    } catch (const std::range_error& e) {
      throw TrainingDiverged(divergence_dump(step, c, vocab_, groups, e.what()));
    }
  }

  StepMetrics m;
  m.step = step;
  m.mean_reward = reward_sum / total;
  m.mean_advantage = advantage_sum / total;
  m.mean_output_tokens = token_sum / total;
  m.gamma = gamma;
  m.aug_fraction = static_cast<double>(augmented) / total;
  m.mean_ratio = agg.mean_ratio();
  m.clip_rate = agg.clip_rate();
  m.aas_mask_rate = agg.mask_rate();
  m.kl = agg.mean_kl();
  m.loss = chunks_run > 0 ? loss_sum / static_cast<double>(chunks_run) : 0.0;

  ++step_;
  return m;
}

namespace {

std::string checkpoint_name(std::int64_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(6) << std::setfill('0') << step << ".json";
  return os.str();
}

}  // namespace

StepMetrics run_and_record(Trainer& trainer, const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  const TrainConfig& cfg = trainer.config();
  const fs::path out(out_dir);
  fs::create_directories(out / "checkpoints");
  write_config_file((out / "config.json").string(), cfg);

  MetricsWriter metrics((out / "metrics.jsonl").string());
  if (log) {
    *log << "algo " << cfg.algo << ", seed " << cfg.seed << ", "
         << trainer.policy().param_count() << " parameters, " << cfg.total_steps << " steps\n";
  }

  StepMetrics last;
  while (trainer.current_step() < cfg.total_steps) {
    last = trainer.step();
    metrics.write(last);
    const std::int64_t done = trainer.current_step();
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      write_checkpoint((out / "checkpoints" / checkpoint_name(done)).string(), trainer.vocab(),
                       trainer.policy());
    }
    if (log && (done % 50 == 0 || done == cfg.total_steps)) {
      *log << "step " << done << "/" << cfg.total_steps << "  reward " << last.mean_reward
           << "  gamma " << last.gamma << "  kl " << last.kl << "  loss " << last.loss << "\n";
    }
  }

  write_checkpoint((out / "checkpoints" / "final.json").string(), trainer.vocab(), trainer.policy());
  return last;
}

std::int64_t run_training(const TrainConfig& cfg, const std::string& out_dir, std::ostream* log) {
  Trainer trainer(cfg);
  run_and_record(trainer, out_dir, log);
  return cfg.total_steps;
}

}  // namespace thinktuning
