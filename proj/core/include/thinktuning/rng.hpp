#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace thinktuning {

// Deterministic, platform-independent randomness built on the splitmix64
// generator. Std distributions are avoided on purpose: their output is
// implementation-defined, and run artifacts here must be reproducible
// bit-for-bit from (seed, stream id) alone.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller. Draws two uniforms per call; no caching,
  // so the draw sequence is a pure function of the call count.
  double gaussian() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Index draw from a probability vector via inverse CDF. Probabilities are
  // assumed nonnegative; rounding leftovers fall to the last index.
  std::size_t categorical(const std::vector<double>& probs) {
    if (probs.empty()) throw std::invalid_argument("Rng::categorical: empty probability vector");
    const double u = uniform01();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return i;
    }
    return probs.size() - 1;
  }

 private:
  std::uint64_t state_;
};

// Hierarchical stream key. Every consumer of randomness (rollout i of query q
// at step s, subset selection, init of tensor t, ...) derives its own key, so
// streams never alias and concurrent evaluation order cannot matter.
class RngKey {
 public:
  explicit RngKey(std::uint64_t seed) : state_(mix(0x7475726b65794b31ULL, seed)) {}

  RngKey child(std::uint64_t word) const { return RngKey(mix(state_, word), 0); }

  Rng stream() const { return Rng(state_); }

  // The key itself as a seed, for APIs that take a plain integer.
  std::uint64_t seed_value() const { return state_; }

 private:
  RngKey(std::uint64_t raw, int) : state_(raw) {}

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64_next(s);
  }

  std::uint64_t state_;
};

// Stream purposes used by the trainer and friends. Kept in one place so no
// two call sites accidentally share a derivation path.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTaskGen = 2;
inline constexpr std::uint64_t kRollout = 3;
inline constexpr std::uint64_t kSubsetSelect = 4;
inline constexpr std::uint64_t kBehavior = 5;
inline constexpr std::uint64_t kShuffle = 6;
inline constexpr std::uint64_t kEval = 7;
inline constexpr std::uint64_t kFallible = 8;
}  // namespace stream

}  // namespace thinktuning
