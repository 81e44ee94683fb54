#include "thinktuning/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace thinktuning {

namespace {

ArmReport run_arm(const TrainConfig& cfg, const std::string& dir, const EvalConfig& eval_cfg,
                  std::ostream* log) {
  Trainer trainer(cfg);
  const StepMetrics last = run_and_record(trainer, dir, log);
  ArmReport report;
  report.algo = cfg.algo;
  report.eval = evaluate_greedy(trainer.vocab(), trainer.policy(), eval_cfg);
  report.final_mean_reward = last.mean_reward;
  return report;
}

nlohmann::ordered_json arm_json(const ArmReport& arm) {
  return {{"algo", arm.algo},
          {"num_queries", arm.eval.num_queries},
          {"accuracy", arm.eval.accuracy},
          {"marker_rate", arm.eval.marker_rate},
          {"mean_output_tokens", arm.eval.mean_output_tokens},
          {"final_mean_reward", arm.final_mean_reward}};
}

}  // namespace

BehaviorExperimentReport run_behavior_experiment(const BehaviorExperimentConfig& cfg,
                                                 const std::string& out_dir, std::ostream* log) {
  if (cfg.eval_queries < 1) {
    throw std::invalid_argument("behavior experiment: eval_queries must be >= 1");
  }

  TrainConfig instilled_cfg = cfg.base;
  instilled_cfg.algo = "thinktuning";
  instilled_cfg.teacher.include_marker = true;
  instilled_cfg.task.reward.marker_bonus_enabled = true;
  TrainConfig control_cfg = instilled_cfg;
  control_cfg.algo = "grpo";

  EvalConfig eval_cfg;
  eval_cfg.num_queries = cfg.eval_queries;
  eval_cfg.difficulty = cfg.base.task.difficulty;
  eval_cfg.seed = cfg.eval_seed;
  eval_cfg.max_len = cfg.base.max_len;

  namespace fs = std::filesystem;
  const fs::path out(out_dir);
  fs::create_directories(out);

  BehaviorExperimentReport report;
  if (log) *log << "instilled arm\n";
  report.instilled = run_arm(instilled_cfg, (out / "instilled").string(), eval_cfg, log);
  if (log) *log << "control arm\n";
  report.control = run_arm(control_cfg, (out / "control").string(), eval_cfg, log);

  std::ofstream rf(out / "report.json", std::ios::binary);
  if (!rf) throw std::runtime_error("behavior experiment: cannot write report.json");
  rf << behavior_report_json(report);
  return report;
}

std::string behavior_report_json(const BehaviorExperimentReport& report) {
  nlohmann::ordered_json root;
  root["schema"] = 1;
  root["instilled"] = arm_json(report.instilled);
  root["control"] = arm_json(report.control);
  return root.dump(2) + "\n";
}

}  // namespace thinktuning
