#include "thinktuning/advantage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thinktuning {

void compute_rewards(const Vocab& vocab, Group& group, const RewardSpec& spec) {
  group.rewards.resize(group.trajectories.size());
  for (std::size_t i = 0; i < group.trajectories.size(); ++i)
    group.rewards[i] = reward(vocab, group.trajectories[i], group.query, spec);
}

void normalize_advantages(Group& group, double eps_std, ExtremaMode mode) {
  const auto n = group.rewards.size();
  if (n < 2) throw std::invalid_argument("normalize_advantages: group size must be at least 2");
  if (eps_std <= 0.0) throw std::invalid_argument("normalize_advantages: eps_std must be positive");

  group.advantages.assign(n, 0.0);
  const auto [mn, mx] = std::minmax_element(group.rewards.begin(), group.rewards.end());
  if (*mn == *mx) {
    // Degenerate group: no signal, advantages stay exactly zero.
    group.a_min = 0.0;
    group.a_max = 0.0;
  } else {
    double mean = 0.0;
    for (double r : group.rewards) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : group.rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);  // population variance
    const double denom = std::sqrt(var) + eps_std;
    for (std::size_t i = 0; i < n; ++i) group.advantages[i] = (group.rewards[i] - mean) / denom;
    group.a_min = *std::min_element(group.advantages.begin(), group.advantages.end());
    group.a_max = *std::max_element(group.advantages.begin(), group.advantages.end());
  }

  if (mode == ExtremaMode::kTheoretical) {
    const double bound = std::sqrt(static_cast<double>(n) - 1.0);
    group.a_max = bound;
    group.a_min = -bound;
  }
}

}  // namespace thinktuning
