#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thinktuning/objective.hpp"
#include "thinktuning/policy.hpp"

namespace thinktuning {

// Deliberate analytic-gradient corruption, used to demonstrate that the
// checker actually fails on a wrong gradient: kAasSignFlip reports the
// shaping term's gradient contribution with its sign inverted.
enum class Fault { kNone, kAasSignFlip };

struct GradCheckConfig {
  std::uint64_t seed = 20240801;
  double fd_step = 1e-5;  // central-difference step
  // Relative-error denominator floor. Central differences carry roundoff
  // noise of about eps*|loss|/step ~ 1e-12, so comparisons only mean
  // something for gradient components comfortably above that; 1e-6 keeps the
  // noise three orders below the tolerance while still flagging any sign or
  // scale error of consequence.
  double rel_floor = 1e-6;
  double loss_fd_tol = 1e-4;     // full-loss FD suites, relative
  double oracle_tol = 1e-10;     // per-logit closed form, absolute
  double reduction_tol = 1e-12;  // guided-loss vs plain-loss agreement, absolute
  Fault fault = Fault::kNone;
};

struct SuiteResult {
  std::string name;
  std::int64_t checked = 0;
  double max_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string worst;  // location of the max error
};

struct GradCheckReport {
  std::vector<SuiteResult> suites;
  bool passed = false;
};

// |a - b| / max(|a|, |b|, floor_val).
double relative_error(double a, double b, double floor_val);

// A small deterministic loss instance: 2 queries, 4 rollouts each, outputs
// up to 6 tokens, half of each group augmented with teacher-origin spans.
// Old/reference log-probs are the current ones plus small per-token offsets,
// keeping every importance ratio strictly inside the clip band and every
// teacher-token probability far from the mask thresholds, so the loss is
// differentiable at the evaluation point. Move-safe; do not copy (views
// point into the owning vectors).
struct FrozenInstance {
  PolicyParams params;
  std::vector<Trajectory> trajectories;
  std::vector<std::vector<double>> old_store, ref_store;
  std::vector<TrajView> views;
  ShapingConfig shaping;
  ClipKLConfig clip_kl;
};

FrozenInstance make_frozen_instance(std::uint64_t seed);

// Runs all suites: central finite differences against the analytic gradient
// of both loss kinds on the frozen instance, the per-logit closed form for
// the shaping weight, and value+gradient agreement of the guided loss with
// the plain loss on unaugmented groups.
GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

std::string gradcheck_report_text(const GradCheckReport& report);

}  // namespace thinktuning
