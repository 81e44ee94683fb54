#include "thinktuning/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>

namespace thinktuning {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  throw ConfigError("config: " + path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(path, "expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) bad(path, "unknown key \"" + it.key() + "\"");
  }
}

void read_double(const json& obj, const std::string& path, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) bad(path + "." + key, "expected a number");
  out = v.get<double>();
}

void read_int(const json& obj, const std::string& path, const char* key, int& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) bad(path + "." + key, "expected an integer");
  const auto wide = v.get<std::int64_t>();
  if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
    bad(path + "." + key, "integer out of range");
  }
  out = static_cast<int>(wide);
}

void read_i64(const json& obj, const std::string& path, const char* key, std::int64_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) bad(path + "." + key, "expected an integer");
  out = v.get<std::int64_t>();
}

void read_u64(const json& obj, const std::string& path, const char* key, std::uint64_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (v.is_number_unsigned()) {
    out = v.get<std::uint64_t>();
    return;
  }
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    bad(path + "." + key, "expected a non-negative integer");
  }
  out = static_cast<std::uint64_t>(v.get<std::int64_t>());
}

void read_bool(const json& obj, const std::string& path, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) bad(path + "." + key, "expected a boolean");
  out = v.get<bool>();
}

void read_string(const json& obj, const std::string& path, const char* key, std::string& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_string()) bad(path + "." + key, "expected a string");
  out = v.get<std::string>();
}

TrainConfig from_json(const json& root) {
  TrainConfig cfg;
  check_keys(root, "<root>",
             {"algo", "seed", "total_steps", "batch_size", "group_size", "mini_batch_size",
              "inner_epochs", "gamma0", "cutoff_step", "max_len", "temperature",
              "checkpoint_every", "eps_std", "extrema_mode", "model", "optim", "shaping",
              "clip_kl", "teacher", "task"});

  read_string(root, "<root>", "algo", cfg.algo);
  read_u64(root, "<root>", "seed", cfg.seed);
  read_i64(root, "<root>", "total_steps", cfg.total_steps);
  read_int(root, "<root>", "batch_size", cfg.batch_size);
  read_int(root, "<root>", "group_size", cfg.group_size);
  read_int(root, "<root>", "mini_batch_size", cfg.mini_batch_size);
  read_int(root, "<root>", "inner_epochs", cfg.inner_epochs);
  read_double(root, "<root>", "gamma0", cfg.gamma0);
  read_i64(root, "<root>", "cutoff_step", cfg.cutoff_step);
  read_int(root, "<root>", "max_len", cfg.max_len);
  read_double(root, "<root>", "temperature", cfg.temperature);
  read_i64(root, "<root>", "checkpoint_every", cfg.checkpoint_every);
  read_double(root, "<root>", "eps_std", cfg.eps_std);

  if (root.contains("extrema_mode")) {
    std::string mode;
    read_string(root, "<root>", "extrema_mode", mode);
    if (mode == "realized") {
      cfg.extrema_mode = ExtremaMode::kRealized;
    } else if (mode == "theoretical") {
      cfg.extrema_mode = ExtremaMode::kTheoretical;
    } else {
      bad("<root>.extrema_mode", "expected \"realized\" or \"theoretical\"");
    }
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m, "model",
               {"embed_dim", "context_width", "hidden_dim", "init_std", "marker_init_logit_bias"});
    read_int(m, "model", "embed_dim", cfg.model.embed_dim);
    read_int(m, "model", "context_width", cfg.model.context_width);
    read_int(m, "model", "hidden_dim", cfg.model.hidden_dim);
    read_double(m, "model", "init_std", cfg.model.init_std);
    read_double(m, "model", "marker_init_logit_bias", cfg.model.marker_init_logit_bias);
  }

  if (root.contains("optim")) {
    const json& o = root.at("optim");
    check_keys(o, "optim", {"kind", "lr", "beta1", "beta2", "eps"});
    read_string(o, "optim", "kind", cfg.optim.kind);
    read_double(o, "optim", "lr", cfg.optim.lr);
    read_double(o, "optim", "beta1", cfg.optim.beta1);
    read_double(o, "optim", "beta2", cfg.optim.beta2);
    read_double(o, "optim", "eps", cfg.optim.eps);
  }

  if (root.contains("shaping")) {
    const json& s = root.at("shaping");
    check_keys(s, "shaping", {"c1", "c2", "mask_high", "mask_low"});
    read_double(s, "shaping", "c1", cfg.shaping.c1);
    read_double(s, "shaping", "c2", cfg.shaping.c2);
    read_double(s, "shaping", "mask_high", cfg.shaping.mask_high);
    read_double(s, "shaping", "mask_low", cfg.shaping.mask_low);
  }

  if (root.contains("clip_kl")) {
    const json& c = root.at("clip_kl");
    check_keys(c, "clip_kl", {"clip_eps", "kl_beta", "kl_on_teacher_tokens"});
    read_double(c, "clip_kl", "clip_eps", cfg.clip_kl.clip_eps);
    read_double(c, "clip_kl", "kl_beta", cfg.clip_kl.kl_beta);
    read_bool(c, "clip_kl", "kl_on_teacher_tokens", cfg.clip_kl.kl_on_teacher_tokens);
  }

  if (root.contains("teacher")) {
    const json& t = root.at("teacher");
    check_keys(t, "teacher",
               {"behavior_weights", "include_marker", "guidance_max_len", "header_len",
                "fallibility"});
    if (t.contains("behavior_weights")) {
      const json& w = t.at("behavior_weights");
      if (!w.is_array() || w.size() != cfg.teacher.behavior_weights.size()) {
        bad("teacher.behavior_weights", "expected an array of 4 numbers");
      }
      for (std::size_t i = 0; i < cfg.teacher.behavior_weights.size(); ++i) {
        if (!w.at(i).is_number()) bad("teacher.behavior_weights", "expected an array of 4 numbers");
        cfg.teacher.behavior_weights[i] = w.at(i).get<double>();
      }
    }
    read_bool(t, "teacher", "include_marker", cfg.teacher.include_marker);
    read_int(t, "teacher", "guidance_max_len", cfg.teacher.guidance_max_len);
    read_int(t, "teacher", "header_len", cfg.teacher.header_len);
    read_double(t, "teacher", "fallibility", cfg.teacher.fallibility);
  }

  if (root.contains("task")) {
    const json& t = root.at("task");
    check_keys(t, "task",
               {"task", "difficulty", "correctness_weight", "marker_bonus", "marker_bonus_enabled",
                "reward_offset"});
    read_string(t, "task", "task", cfg.task.task);
    read_int(t, "task", "difficulty", cfg.task.difficulty);
    read_double(t, "task", "correctness_weight", cfg.task.reward.correctness_weight);
    read_double(t, "task", "marker_bonus", cfg.task.reward.marker_bonus);
    read_bool(t, "task", "marker_bonus_enabled", cfg.task.reward.marker_bonus_enabled);
    read_double(t, "task", "reward_offset", cfg.task.reward.reward_offset);
  }

  return cfg;
}

}  // namespace

TrainConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return from_json(root);
}

std::string config_to_json_text(const TrainConfig& cfg) {
  ordered_json root;
  root["algo"] = cfg.algo;
  root["seed"] = cfg.seed;
  root["total_steps"] = cfg.total_steps;
  root["batch_size"] = cfg.batch_size;
  root["group_size"] = cfg.group_size;
  root["mini_batch_size"] = cfg.mini_batch_size;
  root["inner_epochs"] = cfg.inner_epochs;
  root["gamma0"] = cfg.gamma0;
  root["cutoff_step"] = cfg.cutoff_step;
  root["max_len"] = cfg.max_len;
  root["temperature"] = cfg.temperature;
  root["checkpoint_every"] = cfg.checkpoint_every;
  root["eps_std"] = cfg.eps_std;
  root["extrema_mode"] = cfg.extrema_mode == ExtremaMode::kRealized ? "realized" : "theoretical";
  root["model"] = {{"embed_dim", cfg.model.embed_dim},
                   {"context_width", cfg.model.context_width},
                   {"hidden_dim", cfg.model.hidden_dim},
                   {"init_std", cfg.model.init_std},
                   {"marker_init_logit_bias", cfg.model.marker_init_logit_bias}};
  root["optim"] = {{"kind", cfg.optim.kind},
                   {"lr", cfg.optim.lr},
                   {"beta1", cfg.optim.beta1},
                   {"beta2", cfg.optim.beta2},
                   {"eps", cfg.optim.eps}};
  root["shaping"] = {{"c1", cfg.shaping.c1},
                     {"c2", cfg.shaping.c2},
                     {"mask_high", cfg.shaping.mask_high},
                     {"mask_low", cfg.shaping.mask_low}};
  root["clip_kl"] = {{"clip_eps", cfg.clip_kl.clip_eps},
                     {"kl_beta", cfg.clip_kl.kl_beta},
                     {"kl_on_teacher_tokens", cfg.clip_kl.kl_on_teacher_tokens}};
  root["teacher"] = {{"behavior_weights", cfg.teacher.behavior_weights},
                     {"include_marker", cfg.teacher.include_marker},
                     {"guidance_max_len", cfg.teacher.guidance_max_len},
                     {"header_len", cfg.teacher.header_len},
                     {"fallibility", cfg.teacher.fallibility}};
  root["task"] = {{"task", cfg.task.task},
                  {"difficulty", cfg.task.difficulty},
                  {"correctness_weight", cfg.task.reward.correctness_weight},
                  {"marker_bonus", cfg.task.reward.marker_bonus},
                  {"marker_bonus_enabled", cfg.task.reward.marker_bonus_enabled},
                  {"reward_offset", cfg.task.reward.reward_offset}};
  return root.dump(2) + "\n";
}

TrainConfig read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void write_config_file(const std::string& path, const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("config: cannot write " + path);
  out << config_to_json_text(cfg);
  if (!out) throw ConfigError("config: failed writing " + path);
}

}  // namespace thinktuning
