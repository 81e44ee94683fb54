#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "thinktuning/checkpoint.hpp"
#include "thinktuning/config.hpp"
#include "thinktuning/eval.hpp"
#include "thinktuning/experiment.hpp"
#include "thinktuning/gradcheck.hpp"
#include "thinktuning/tensor.hpp"
#include "thinktuning/trainer.hpp"

namespace {

using namespace thinktuning;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitBadConfig = 2;

struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::int64_t steps = 0;
  bool steps_set = false;
  std::string algo;
};

TrainConfig load_config(const Overrides& ov) {
  TrainConfig cfg;
  if (!ov.config_path.empty()) cfg = read_config_file(ov.config_path);
  if (ov.seed_set) cfg.seed = ov.seed;
  if (ov.steps_set) cfg.total_steps = ov.steps;
  if (!ov.algo.empty()) cfg.algo = ov.algo;
  return cfg;
}

Trainer::RunState warm_start_state(const Checkpoint& ck) {
  Trainer::RunState state;
  state.policy = snapshot(ck.params);
  state.reference = snapshot(ck.params);
  state.step = 0;
  state.adam.t = 0;
  for (const Tensor* t : ck.params.tensors()) {
    state.adam.m.push_back(Tensor::zeros(t->shape));
    state.adam.v.push_back(Tensor::zeros(t->shape));
  }
  return state;
}

int cmd_train(const Overrides& ov, const std::string& out_dir, const std::string& warm_start) {
  TrainConfig cfg = load_config(ov);
  cfg.validate();
  if (warm_start.empty()) {
    run_training(cfg, out_dir, &std::cerr);
  } else {
    const Checkpoint ck = read_checkpoint(warm_start);
    Trainer trainer(cfg, warm_start_state(ck));
    run_and_record(trainer, out_dir, &std::cerr);
  }
  std::cout << "wrote " << out_dir << "/metrics.jsonl and " << out_dir
            << "/checkpoints/final.json\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, bool inject_fault) {
  GradCheckConfig cfg;
  cfg.seed = seed;
  cfg.fault = inject_fault ? Fault::kAasSignFlip : Fault::kNone;
  const GradCheckReport report = run_gradcheck(cfg);
  std::cout << gradcheck_report_text(report);
  return report.passed ? kExitOk : kExitFailure;
}

int cmd_eval(const std::string& checkpoint_path, int num, int difficulty, std::uint64_t seed,
             int max_len) {
  const Checkpoint ck = read_checkpoint(checkpoint_path);
  EvalConfig cfg;
  cfg.num_queries = num;
  cfg.difficulty = difficulty;
  cfg.seed = seed;
  cfg.max_len = max_len;
  const EvalResult r = evaluate_greedy(ck.vocab, ck.params, cfg);
  nlohmann::ordered_json out;
  out["num_queries"] = r.num_queries;
  out["num_correct"] = r.num_correct;
  out["accuracy"] = r.accuracy;
  out["mean_output_tokens"] = r.mean_output_tokens;
  out["marker_rate"] = r.marker_rate;
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_experiment(const Overrides& ov, const std::string& out_dir, int eval_queries,
                   std::uint64_t eval_seed) {
  BehaviorExperimentConfig cfg;
  if (ov.config_path.empty()) {
    // Experiment defaults: short paired runs with the KL penalty off, so the
    // marker bonus is the only pressure shaping the policies apart.
    cfg.base.clip_kl.kl_beta = 0.0;
    cfg.base.total_steps = 300;
    if (ov.seed_set) cfg.base.seed = ov.seed;
    if (ov.steps_set) cfg.base.total_steps = ov.steps;
  } else {
    cfg.base = load_config(ov);
  }
  cfg.base.validate();
  cfg.eval_queries = eval_queries;
  cfg.eval_seed = eval_seed;
  const BehaviorExperimentReport report = run_behavior_experiment(cfg, out_dir, &std::cerr);
  std::cout << behavior_report_json(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thinktune: teacher-guided GRPO training on a toy token policy"};
  app.require_subcommand(1);

  Overrides ov;
  std::string out_dir, warm_start, checkpoint_path;
  bool inject_fault = false;
  std::uint64_t gc_seed = 20240801, eval_seed = 1234;
  int eval_num = 200, eval_difficulty = 1, eval_max_len = 48, exp_queries = 200;

  CLI::App* train = app.add_subcommand("train", "run a training job");
  train->add_option("--config", ov.config_path, "JSON config file (defaults apply when omitted)");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", ov.seed, "override config seed")->each([&](const std::string&) { ov.seed_set = true; });
  train->add_option("--steps", ov.steps, "override config total_steps")->each([&](const std::string&) { ov.steps_set = true; });
  train->add_option("--algo", ov.algo, "override config algo (thinktuning|grpo)");
  train->add_option("--init-checkpoint", warm_start,
                    "initialize the policy (and KL reference) from a checkpoint");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients against oracles");
  gradcheck->add_option("--seed", gc_seed, "instance seed");
  gradcheck->add_flag("--inject-fault", inject_fault,
                      "corrupt the shaping-term gradient to prove the checker can fail");

  CLI::App* eval = app.add_subcommand("eval", "greedy-decode accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
  eval->add_option("--num", eval_num, "number of queries");
  eval->add_option("--difficulty", eval_difficulty, "operand digit count (1-3)");
  eval->add_option("--seed", eval_seed, "held-out query stream seed");
  eval->add_option("--max-len", eval_max_len, "generation length cap");

  CLI::App* experiment = app.add_subcommand("experiment-behavior",
                                            "paired guided-vs-plain runs with the marker bonus");
  experiment->add_option("--config", ov.config_path, "base JSON config");
  experiment->add_option("--out", out_dir, "output directory")->required();
  experiment->add_option("--seed", ov.seed, "override base seed")->each([&](const std::string&) { ov.seed_set = true; });
  experiment->add_option("--steps", ov.steps, "override base total_steps")->each([&](const std::string&) { ov.steps_set = true; });
  experiment->add_option("--eval-queries", exp_queries, "evaluation generations per arm");
  experiment->add_option("--eval-seed", eval_seed, "evaluation query stream seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (train->parsed()) return cmd_train(ov, out_dir, warm_start);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, inject_fault);
    if (eval->parsed()) return cmd_eval(checkpoint_path, eval_num, eval_difficulty, eval_seed, eval_max_len);
    if (experiment->parsed()) return cmd_experiment(ov, out_dir, exp_queries, eval_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitBadConfig;
}
