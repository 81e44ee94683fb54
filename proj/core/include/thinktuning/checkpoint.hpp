#pragma once

#include <string>

#include "thinktuning/policy.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

// Versioned policy checkpoint: vocab list, dims, and flat parameter arrays
// as JSON. Doubles are serialized with shortest round-trip formatting, so a
// write/read cycle reproduces every parameter bit for bit; a test pins that.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Vocab vocab;
  PolicyParams params;
};

void write_checkpoint(const std::string& path, const Vocab& vocab, const PolicyParams& params);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace thinktuning
