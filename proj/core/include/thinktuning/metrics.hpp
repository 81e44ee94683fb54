#pragma once

#include <fstream>
#include <string>

#include "thinktuning/trainer.hpp"

namespace thinktuning {

inline constexpr int kMetricsSchemaVersion = 1;

// One metrics record as a single JSON line: fixed key order, schema version
// first, shortest-round-trip numbers, no timestamps or other run-local noise,
// so identical runs produce byte-identical files.
std::string metrics_json_line(const StepMetrics& m);

// Appends one line per step to a JSON-lines file.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);

  void write(const StepMetrics& m);

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace thinktuning
