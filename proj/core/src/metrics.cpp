#include "thinktuning/metrics.hpp"

#include <json.hpp>

#include <stdexcept>

namespace thinktuning {

std::string metrics_json_line(const StepMetrics& m) {
  nlohmann::ordered_json line;
  line["schema"] = kMetricsSchemaVersion;
  line["step"] = m.step;
  line["mean_reward"] = m.mean_reward;
  line["mean_advantage"] = m.mean_advantage;
  line["mean_output_tokens"] = m.mean_output_tokens;
  line["gamma"] = m.gamma;
  line["aug_fraction"] = m.aug_fraction;
  line["mean_ratio"] = m.mean_ratio;
  line["clip_rate"] = m.clip_rate;
  line["aas_mask_rate"] = m.aas_mask_rate;
  line["kl"] = m.kl;
  line["loss"] = m.loss;
  return line.dump();
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw std::runtime_error("metrics: cannot write " + path);
}

void MetricsWriter::write(const StepMetrics& m) {
  out_ << metrics_json_line(m) << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("metrics: failed writing " + path_);
}

}  // namespace thinktuning
