#pragma once

#include <vector>

#include "thinktuning/policy.hpp"
#include "thinktuning/tasks.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

// One query's rollout group with scalar rewards and normalized advantages.
// Every token of trajectory i carries the same advantage advantages[i].
struct Group {
  Query query;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double a_min = 0.0;  // advantage extrema used by the shaping coefficient
  double a_max = 0.0;
};

// Scalar reward per trajectory, evaluated on the full output including any
// teacher-injected tokens.
void compute_rewards(const Vocab& vocab, Group& group, const RewardSpec& spec);

// What a_min/a_max mean for the shaping schedule: the realized extrema of
// this group's advantages (default), or the theoretical extremes of a
// group-standardized score.
enum class ExtremaMode { kRealized, kTheoretical };

// Group-standardized advantages: A_i = (r_i - mean(r)) / (popstd(r) + eps).
// If all rewards are equal, every advantage is exactly zero. Requires at
// least 2 trajectories.
//
// Theoretical extrema derivation: with one outlier x among n-1 copies of y,
// mean m = (x+(n-1)y)/n, so x-m = (n-1)(x-y)/n and y-m = -(x-y)/n; the
// population variance is ((n-1)^2 + (n-1)) (x-y)^2 / n^3 = (n-1)(x-y)^2/n^2,
// giving the outlier a standardized score of +/- sqrt(n-1). That is the
// largest magnitude any population-standardized score can reach, so
// kTheoretical uses a_max = +sqrt(n-1), a_min = -sqrt(n-1).
void normalize_advantages(Group& group, double eps_std = 1e-6,
                          ExtremaMode mode = ExtremaMode::kRealized);

}  // namespace thinktuning
