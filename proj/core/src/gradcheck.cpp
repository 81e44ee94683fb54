#include "thinktuning/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "thinktuning/advantage.hpp"
#include "thinktuning/rng.hpp"
#include "thinktuning/tape.hpp"
#include "thinktuning/tasks.hpp"
#include "thinktuning/vocab.hpp"

namespace thinktuning {

double relative_error(double a, double b, double floor_val) {
  if (!(floor_val > 0.0)) throw std::invalid_argument("relative_error: floor must be > 0");
  const double denom = std::max({std::fabs(a), std::fabs(b), floor_val});
  return std::fabs(a - b) / denom;
}

FrozenInstance make_frozen_instance(std::uint64_t seed) {
  const Vocab vocab = Vocab::standard();
  const RngKey root(seed);

  ModelConfig model;
  model.embed_dim = 4;
  model.context_width = 6;
  model.hidden_dim = 8;
  model.init_std = 0.05;
  model.marker_init_logit_bias = 0.0;  // keep every token probability moderate

  FrozenInstance inst;
  inst.params = init_policy(vocab, model, root.child(1).seed_value());
  inst.clip_kl = ClipKLConfig{0.2, 0.01, true};

  // Hand-pinned per-group advantages and extrema (mixed signs, interior and
  // endpoint values for the shaping map).
  const double advantages[2][4] = {{1.1, -0.3, 0.4, -0.9}, {0.8, 0.6, -0.5, -0.2}};
  const double a_min[2] = {-0.9, -0.5};
  const double a_max[2] = {1.1, 0.8};

  inst.trajectories.reserve(8);
  for (int g = 0; g < 2; ++g) {
    const Query query =
        gen_arithmetic(root.child(2).child(static_cast<std::uint64_t>(g)).seed_value(), 1);
    for (int i = 0; i < 4; ++i) {
      Rng rng = root.child(3).child(static_cast<std::uint64_t>(g)).child(static_cast<std::uint64_t>(i)).stream();
      Trajectory traj;
      traj.query = query.tokens;
      const int len = 3 + i;  // 3..6 output tokens
      for (int t = 0; t < len; ++t) {
        traj.output.push_back(static_cast<int>(rng.uniform_int(vocab.size())));
      }
      traj.teacher_origin.assign(traj.output.size(), 0);
      traj.sampling_logprobs.assign(traj.output.size(), 0.0);
      if (i >= 2) {  // last two rollouts of each group carry a teacher span
        traj.augmented = true;
        traj.teacher_origin[traj.output.size() - 1] = 1;
        traj.teacher_origin[traj.output.size() - 2] = 1;
      }
      inst.trajectories.push_back(std::move(traj));
    }
  }

  inst.old_store.resize(inst.trajectories.size());
  inst.ref_store.resize(inst.trajectories.size());
  inst.views.reserve(inst.trajectories.size());
  for (std::size_t k = 0; k < inst.trajectories.size(); ++k) {
    const Trajectory& traj = inst.trajectories[k];
    const std::vector<double> cur = logprobs(inst.params, traj);
    Rng rng = root.child(4).child(k).stream();
    std::vector<double> old_lps(cur.size()), ref_lps(cur.size());
    for (std::size_t t = 0; t < cur.size(); ++t) {
      // Ratios stay in [exp(-0.05), exp(0.05)], well inside the clip band.
      old_lps[t] = cur[t] + (rng.uniform01() * 0.1 - 0.05);
      ref_lps[t] = cur[t] + (rng.uniform01() * 0.2 - 0.1);
    }
    inst.old_store[k] = std::move(old_lps);
    inst.ref_store[k] = std::move(ref_lps);
    const std::size_t g = k / 4, i = k % 4;
    inst.views.push_back(TrajView{&traj, advantages[g][i], a_min[g], a_max[g],
                                  &inst.old_store[k], &inst.ref_store[k]});
  }
  return inst;
}

namespace {

double loss_value(const PolicyParams& params, const FrozenInstance& inst, LossKind kind) {
  Tape tape;
  LossResult res = loss_from_views(tape, params, inst.views, kind, inst.shaping, inst.clip_kl);
  return tape.value(res.loss).at(0);
}

// The shaping weight's stop-gradient denominator makes its defined gradient
// differ from the true derivative of the forward value, so finite
// differences must probe a surrogate whose denominators stay frozen at the
// base point. Per included teacher token we record D0 = prob(base) + c and,
// at each probe point, swap the live weight M/(M+c) for the frozen M/D0 in
// the loss value. Both agree at the base point; only the FD slope changes.
struct FrozenDenoms {
  struct Entry {
    std::size_t view;
    std::size_t token;
    double c;
    double d0;
    double scale;  // advantage / (eff * num_views), the token's loss weight
  };
  std::vector<Entry> entries;
};

FrozenDenoms build_frozen_denoms(const FrozenInstance& inst, LossKind kind) {
  FrozenDenoms fd;
  if (kind != LossKind::kThinkTuning) return fd;
  for (std::size_t v = 0; v < inst.views.size(); ++v) {
    const TrajView& view = inst.views[v];
    const Trajectory& traj = *view.traj;
    if (!traj.augmented || traj.output.empty()) continue;
    const std::vector<double> lps = logprobs(inst.params, traj);
    std::vector<std::size_t> included;
    std::size_t students = 0;
    for (std::size_t t = 0; t < traj.output.size(); ++t) {
      if (!traj.teacher_origin[t]) {
        ++students;
      } else if (aas_included(std::exp(lps[t]), view.advantage, inst.shaping)) {
        included.push_back(t);
      }
    }
    if (included.empty()) continue;
    const double c =
        shaping_coeff(view.advantage, view.a_min, view.a_max, inst.shaping.c1, inst.shaping.c2);
    const double eff = static_cast<double>(students + included.size());
    const double scale = view.advantage / (eff * static_cast<double>(inst.views.size()));
    for (std::size_t t : included) {
      fd.entries.push_back({v, t, c, std::exp(lps[t]) + c, scale});
    }
  }
  return fd;
}

double fd_probe_value(const PolicyParams& params, const FrozenInstance& inst, LossKind kind,
                      const FrozenDenoms& denoms) {
  double value = loss_value(params, inst, kind);
  std::size_t i = 0;
  while (i < denoms.entries.size()) {
    const std::size_t v = denoms.entries[i].view;
    const std::vector<double> lps = logprobs(params, *inst.views[v].traj);
    for (; i < denoms.entries.size() && denoms.entries[i].view == v; ++i) {
      const FrozenDenoms::Entry& e = denoms.entries[i];
      const double m = std::exp(lps[e.token]);
      // J gains scale*(m/d0 - m/(m+c)); the loss is -J, hence the sign.
      value -= e.scale * (m / e.d0 - m / (m + e.c));
    }
  }
  return value;
}

std::vector<Tensor> analytic_grads(const PolicyParams& params, const FrozenInstance& inst,
                                   LossKind kind) {
  Tape tape;
  LossResult res = loss_from_views(tape, params, inst.views, kind, inst.shaping, inst.clip_kl);
  tape.backward(res.loss);
  std::vector<Tensor> grads;
  for (const Var& leaf : res.leaves.list()) grads.push_back(leaf.grad());
  return grads;
}

// Gradient of the shaping term's share of the loss alone, rebuilt from the
// public pieces exactly as the loss assembles it. Used by kAasSignFlip to
// invert just that contribution on the analytic side.
std::vector<Tensor> aas_part_grads(const FrozenInstance& inst) {
  Tape tape;
  PolicyLeaves leaves = PolicyLeaves::bind(tape, inst.params);
  std::optional<Var> acc;
  for (const TrajView& view : inst.views) {
    const Trajectory& traj = *view.traj;
    if (!traj.augmented || traj.output.empty()) continue;
    Var cur_lp = policy_logprob_rows(tape, leaves, inst.params, traj);
    const Tensor& lp_vals = tape.value(cur_lp);
    std::vector<std::int64_t> included;
    std::size_t students = 0;
    for (std::size_t t = 0; t < traj.output.size(); ++t) {
      if (!traj.teacher_origin[t]) {
        ++students;
        continue;
      }
      const double prob = std::exp(lp_vals.at(static_cast<std::int64_t>(t)));
      if (aas_included(prob, view.advantage, inst.shaping)) {
        included.push_back(static_cast<std::int64_t>(t));
      }
    }
    if (included.empty()) continue;
    const double c =
        shaping_coeff(view.advantage, view.a_min, view.a_max, inst.shaping.c1, inst.shaping.c2);
    Var m = exp(gather_rows(cur_lp, included));
    Var term = sum(aas_weight(tape, m, c) * tape.constant(view.advantage));
    Var contrib = term / tape.constant(static_cast<double>(students + included.size()));
    acc = acc ? *acc + contrib : contrib;
  }

  std::vector<Tensor> grads;
  if (!acc) {
    for (const Var& leaf : leaves.list()) grads.push_back(Tensor::zeros(leaf.value().shape));
    return grads;
  }
  Var part = tape.constant(0.0) - *acc / tape.constant(static_cast<double>(inst.views.size()));
  tape.backward(part);
  for (const Var& leaf : leaves.list()) grads.push_back(leaf.grad());
  return grads;
}

SuiteResult fd_suite(const std::string& name, const FrozenInstance& inst, LossKind kind,
                     const GradCheckConfig& cfg) {
  std::vector<Tensor> grads = analytic_grads(inst.params, inst, kind);
  if (cfg.fault == Fault::kAasSignFlip && kind == LossKind::kThinkTuning) {
    const std::vector<Tensor> part = aas_part_grads(inst);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      for (std::size_t k = 0; k < grads[i].data.size(); ++k) {
        grads[i].data[k] -= 2.0 * part[i].data[k];
      }
    }
  }

  PolicyParams probe = snapshot(inst.params);
  const std::vector<std::string>& names = PolicyParams::tensor_names();
  const std::vector<Tensor*> tensors = probe.tensors();
  const FrozenDenoms denoms = build_frozen_denoms(inst, kind);

  SuiteResult suite;
  suite.name = name;
  suite.tolerance = cfg.loss_fd_tol;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    for (std::size_t k = 0; k < tensors[ti]->data.size(); ++k) {
      const double saved = tensors[ti]->data[k];
      tensors[ti]->data[k] = saved + cfg.fd_step;
      const double up = fd_probe_value(probe, inst, kind, denoms);
      tensors[ti]->data[k] = saved - cfg.fd_step;
      const double down = fd_probe_value(probe, inst, kind, denoms);
      tensors[ti]->data[k] = saved;
      const double fd = (up - down) / (2.0 * cfg.fd_step);
      const double rel = relative_error(grads[ti].data[k], fd, cfg.rel_floor);
      suite.checked += 1;
      if (rel > suite.max_err) {
        suite.max_err = rel;
        suite.worst = names[ti] + "[" + std::to_string(k) + "]";
      }
    }
  }
  suite.passed = suite.max_err <= suite.tolerance;
  return suite;
}

SuiteResult oracle_suite(const GradCheckConfig& cfg) {
  SuiteResult suite;
  suite.name = "aas-logit-closed-form";
  suite.tolerance = cfg.oracle_tol;
  const double cs[3] = {-1e-4, 0.0, 1e-4};
  for (int draw = 0; draw < 100; ++draw) {
    Rng rng = RngKey(cfg.seed).child(101).child(static_cast<std::uint64_t>(draw)).stream();
    std::vector<double> logits(8);
    for (double& x : logits) x = rng.uniform01() * 6.0 - 3.0;
    const auto target = static_cast<std::int64_t>(rng.uniform_int(8));
    for (double c : cs) {
      Tape tape;
      Var lg = tape.leaf(Tensor::vector(logits));
      Var lp = row_log_softmax(lg);
      Var m = exp(gather_rows(lp, {target}));
      tape.backward(sum(aas_weight(tape, m, c)));
      const Tensor g = lg.grad();

      std::vector<double> probs(logits.size());
      const Tensor& lp_vals = tape.value(lp);
      for (std::size_t v = 0; v < probs.size(); ++v) probs[v] = std::exp(lp_vals.at(static_cast<std::int64_t>(v)));
      const std::vector<double> oracle = per_logit_grad_oracle(probs, static_cast<int>(target), c);
      for (std::size_t v = 0; v < probs.size(); ++v) {
        const double err = std::fabs(g.at(static_cast<std::int64_t>(v)) - oracle[v]);
        suite.checked += 1;
        if (err > suite.max_err) {
          suite.max_err = err;
          std::ostringstream os;
          os << "draw " << draw << " c=" << c << " logit " << v;
          suite.worst = os.str();
        }
      }
    }
  }
  suite.passed = suite.max_err <= suite.tolerance;
  return suite;
}

SuiteResult reduction_suite(const GradCheckConfig& cfg) {
  SuiteResult suite;
  suite.name = "unguided-reduction";
  suite.tolerance = cfg.reduction_tol;
  const Vocab vocab = Vocab::standard();
  ModelConfig model;
  model.embed_dim = 4;
  model.context_width = 6;
  model.hidden_dim = 8;
  model.marker_init_logit_bias = 0.0;
  const ClipKLConfig clip_kl{0.2, 0.01, true};

  for (int g = 0; g < 50; ++g) {
    const RngKey key = RngKey(cfg.seed).child(202).child(static_cast<std::uint64_t>(g));
    const PolicyParams old_policy = init_policy(vocab, model, key.child(1).seed_value());
    const PolicyParams cur = init_policy(vocab, model, key.child(2).seed_value());

    Group group;
    group.query = gen_arithmetic(key.child(3).seed_value(), 1);
    group.trajectories = sample_rollouts(old_policy, group.query.tokens, 4, 6, 1.0, vocab.eos(),
                                         key.child(4));
    Rng reward_rng = key.child(5).stream();
    group.rewards.resize(group.trajectories.size());
    for (double& r : group.rewards) r = 0.5 * static_cast<double>(reward_rng.uniform_int(3));
    normalize_advantages(group);

    Tape t1, t2;
    const std::vector<Group> groups{group};
    LossResult guided = thinktuning_loss(t1, groups, cur, old_policy, old_policy,
                                         ShapingConfig{}, clip_kl);
    LossResult plain = grpo_loss(t2, groups, cur, old_policy, old_policy, clip_kl);

    const double value_diff = std::fabs(t1.value(guided.loss).at(0) - t2.value(plain.loss).at(0));
    suite.checked += 1;
    if (value_diff > suite.max_err) {
      suite.max_err = value_diff;
      suite.worst = "group " + std::to_string(g) + " loss value";
    }

    t1.backward(guided.loss);
    t2.backward(plain.loss);
    const std::vector<Var> a = guided.leaves.list(), b = plain.leaves.list();
    const std::vector<std::string>& names = PolicyParams::tensor_names();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Tensor ga = a[i].grad(), gb = b[i].grad();
      for (std::size_t k = 0; k < ga.data.size(); ++k) {
        const double err = std::fabs(ga.data[k] - gb.data[k]);
        suite.checked += 1;
        if (err > suite.max_err) {
          suite.max_err = err;
          suite.worst = "group " + std::to_string(g) + " " + names[i] + "[" + std::to_string(k) + "]";
        }
      }
    }
  }
  suite.passed = suite.max_err <= suite.tolerance;
  return suite;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  if (!(cfg.fd_step > 0.0)) throw std::invalid_argument("gradcheck: fd_step must be > 0");
  GradCheckReport report;
  const FrozenInstance inst = make_frozen_instance(cfg.seed);
  report.suites.push_back(fd_suite("guided-loss-fd", inst, LossKind::kThinkTuning, cfg));
  report.suites.push_back(fd_suite("plain-loss-fd", inst, LossKind::kGrpo, cfg));
  report.suites.push_back(oracle_suite(cfg));
  report.suites.push_back(reduction_suite(cfg));
  report.passed = true;
  for (const SuiteResult& s : report.suites) report.passed = report.passed && s.passed;
  return report;
}

std::string gradcheck_report_text(const GradCheckReport& report) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(3);
  for (const SuiteResult& s : report.suites) {
    os << "suite " << s.name << ": checked " << s.checked << ", max err " << s.max_err
       << " (tol " << s.tolerance << ")";
    if (!s.worst.empty()) os << ", worst at " << s.worst;
    os << (s.passed ? " -- PASS" : " -- FAIL") << "\n";
  }
  os << "gradcheck: " << (report.passed ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace thinktuning
