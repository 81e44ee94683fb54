#include "thinktuning/objective.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace thinktuning {

double importance_ratio(double cur_lp, double old_lp) { return std::exp(cur_lp - old_lp); }

double clipped_term(double w, double advantage, double clip_eps) {
  const double lo = 1.0 - clip_eps, hi = 1.0 + clip_eps;
  const double wc = w < lo ? lo : (w > hi ? hi : w);
  return std::min(w * advantage, wc * advantage);
}

double kl_k3(double cur_lp, double ref_lp) {
  const double d = ref_lp - cur_lp;
  return std::exp(d) - d - 1.0;
}

double shaping_coeff(double advantage, double a_min, double a_max, double c1, double c2) {
  if (!(a_min <= advantage && advantage <= a_max))
    throw std::invalid_argument("shaping_coeff: advantage outside [a_min, a_max]");
  if (a_max == a_min) return 0.5 * (c1 + c2);
  if (advantage == a_max) return c1;  // keep endpoints exact in floating point
  if (advantage == a_min) return c2;
  return c1 + (c2 - c1) * ((a_max - advantage) / (a_max - a_min));
}

bool aas_included(double prob, double advantage, const ShapingConfig& cfg) {
  if (prob > cfg.mask_high && advantage > 0.0) return false;
  if (prob < cfg.mask_low && advantage < 0.0) return false;
  return true;
}

Var aas_weight(Tape& tape, Var prob, double c) {
  const Tensor& v = tape.value(prob);
  for (double p : v.data)
    if (p + c <= 0.0)
      throw std::domain_error("aas_weight: prob + c <= 0; masking rules should exclude this token");
  return prob / (stop_gradient(prob) + c);
}

double aas_weight_value(double prob, double c) {
  if (prob + c <= 0.0)
    throw std::domain_error("aas_weight_value: prob + c <= 0");
  return prob / (prob + c);
}

std::vector<double> per_logit_grad_oracle(const std::vector<double>& probs, int target, double c) {
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size())
    throw std::out_of_range("per_logit_grad_oracle: target out of range");
  const double m = probs[static_cast<std::size_t>(target)];
  const double d = m + c;
  if (d <= 0.0) throw std::domain_error("per_logit_grad_oracle: prob + c <= 0");
  std::vector<double> g(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v)
    g[v] = (m / d) * ((static_cast<int>(v) == target ? 1.0 : 0.0) - probs[v]);
  return g;
}

namespace {

// Per-trajectory objective term J_i; see loss_from_views in the header for
// the exact normalization contract.
Var build_view_term(Tape& tape, const PolicyLeaves& leaves, const PolicyParams& cur,
                    const TrajView& view, LossKind kind, const ShapingConfig& shaping,
                    const ClipKLConfig& clip_kl, LossStats& stats) {
  const Trajectory& traj = *view.traj;
  const auto t_count = traj.output.size();
  stats.trajectories += 1;
  if (t_count == 0) return tape.constant(0.0);
  if (view.old_lps->size() != t_count || view.ref_lps->size() != t_count)
    throw std::invalid_argument("loss: old/ref logprob buffers do not match trajectory length");

  Var cur_lp = policy_logprob_rows(tape, leaves, cur, traj);
  const Tensor& lp_vals = tape.value(cur_lp);

  std::vector<std::int64_t> student_idx, teacher_idx;
  for (std::size_t t = 0; t < t_count; ++t) {
    if (kind == LossKind::kGrpo || !traj.teacher_origin[t])
      student_idx.push_back(static_cast<std::int64_t>(t));
    else
      teacher_idx.push_back(static_cast<std::int64_t>(t));
  }
  std::vector<std::int64_t> included;
  for (std::int64_t t : teacher_idx) {
    const double prob = std::exp(lp_vals.at(t));
    if (aas_included(prob, view.advantage, shaping))
      included.push_back(t);
    else
      stats.masked_tokens += 1;
  }
  stats.student_tokens += static_cast<std::int64_t>(student_idx.size());
  stats.teacher_tokens += static_cast<std::int64_t>(teacher_idx.size());

  std::optional<Var> surr;
  if (!student_idx.empty()) {
    std::vector<double> old_sel;
    old_sel.reserve(student_idx.size());
    for (std::int64_t t : student_idx) old_sel.push_back((*view.old_lps)[static_cast<std::size_t>(t)]);
    Var w = exp(gather_rows(cur_lp, student_idx) - tape.constant(Tensor::vector(std::move(old_sel))));

    const Tensor& wv = tape.value(w);
    for (std::int64_t k = 0; k < wv.numel(); ++k) {
      stats.ratio_sum += wv.at(k);
      const bool dead = (view.advantage > 0.0 && wv.at(k) > 1.0 + clip_kl.clip_eps) ||
                        (view.advantage < 0.0 && wv.at(k) < 1.0 - clip_kl.clip_eps);
      if (dead) stats.clip_active += 1;
    }
    Var a = tape.constant(view.advantage);
    surr = sum(minimum(w * a, clip(w, 1.0 - clip_kl.clip_eps, 1.0 + clip_kl.clip_eps) * a));
  }
  if (!included.empty()) {
    const double c = shaping_coeff(view.advantage, view.a_min, view.a_max, shaping.c1, shaping.c2);
    Var m = exp(gather_rows(cur_lp, included));
    Var teacher_term = sum(aas_weight(tape, m, c) * tape.constant(view.advantage));
    surr = surr ? *surr + teacher_term : teacher_term;
  }

  const auto eff = student_idx.size() + included.size();
  Var j = surr ? *surr / tape.constant(static_cast<double>(eff)) : tape.constant(0.0);

  const std::vector<std::int64_t>* kl_idx = &student_idx;
  std::vector<std::int64_t> all_idx;
  if (clip_kl.kl_on_teacher_tokens) {
    all_idx.resize(t_count);
    for (std::size_t t = 0; t < t_count; ++t) all_idx[t] = static_cast<std::int64_t>(t);
    kl_idx = &all_idx;
  }
  if (!kl_idx->empty()) {
    double ksum = 0.0;
    for (std::int64_t t : *kl_idx)
      ksum += kl_k3(lp_vals.at(t), (*view.ref_lps)[static_cast<std::size_t>(t)]);
    stats.kl_sum += ksum / static_cast<double>(kl_idx->size());
    if (clip_kl.kl_beta != 0.0) {
      std::vector<double> ref_sel;
      ref_sel.reserve(kl_idx->size());
      for (std::int64_t t : *kl_idx) ref_sel.push_back((*view.ref_lps)[static_cast<std::size_t>(t)]);
      Var d = tape.constant(Tensor::vector(std::move(ref_sel))) - gather_rows(cur_lp, *kl_idx);
      Var k3 = exp(d) - d - 1.0;
      j = j - tape.constant(clip_kl.kl_beta) * mean(k3);
    }
  }
  return j;
}

}  // namespace

LossResult loss_from_views(Tape& tape, const PolicyParams& cur, const std::vector<TrajView>& views,
                           LossKind kind, const ShapingConfig& shaping, const ClipKLConfig& clip_kl) {
  if (views.empty()) throw std::invalid_argument("loss: no trajectories");
  if (clip_kl.clip_eps <= 0.0 || clip_kl.clip_eps >= 1.0)
    throw std::invalid_argument("loss: clip_eps must lie in (0,1)");

  LossResult res;
  res.leaves = PolicyLeaves::bind(tape, cur);
  std::optional<Var> acc;
  for (const TrajView& v : views) {
    Var j = build_view_term(tape, res.leaves, cur, v, kind, shaping, clip_kl, res.stats);
    acc = acc ? *acc + j : j;
  }
  Var j_mean = *acc / tape.constant(static_cast<double>(views.size()));
  res.loss = tape.constant(0.0) - j_mean;
  res.stats.value = tape.value(res.loss).at(0);
  return res;
}

namespace {

struct PreparedViews {
  std::vector<std::vector<double>> old_store, ref_store;
  std::vector<TrajView> views;
};

PreparedViews prepare_views(const std::vector<Group>& groups, const PolicyParams& old_policy,
                            const PolicyParams& ref_policy) {
  std::size_t total = 0;
  for (const Group& g : groups) total += g.trajectories.size();

  PreparedViews p;
  p.old_store.resize(total);
  p.ref_store.resize(total);
  p.views.reserve(total);
  std::size_t k = 0;
  for (const Group& g : groups) {
    if (g.advantages.size() != g.trajectories.size() || g.rewards.size() != g.trajectories.size())
      throw std::invalid_argument("loss: group rewards/advantages not aligned with trajectories");
    for (std::size_t i = 0; i < g.trajectories.size(); ++i, ++k) {
      p.old_store[k] = logprobs(old_policy, g.trajectories[i]);
      p.ref_store[k] = logprobs(ref_policy, g.trajectories[i]);
      p.views.push_back(TrajView{&g.trajectories[i], g.advantages[i], g.a_min, g.a_max,
                                 &p.old_store[k], &p.ref_store[k]});
    }
  }
  return p;
}

}  // namespace

LossResult thinktuning_loss(Tape& tape, const std::vector<Group>& groups, const PolicyParams& cur,
                            const PolicyParams& old_policy, const PolicyParams& ref_policy,
                            const ShapingConfig& shaping, const ClipKLConfig& clip_kl) {
  const PreparedViews p = prepare_views(groups, old_policy, ref_policy);
  return loss_from_views(tape, cur, p.views, LossKind::kThinkTuning, shaping, clip_kl);
}

LossResult grpo_loss(Tape& tape, const std::vector<Group>& groups, const PolicyParams& cur,
                     const PolicyParams& old_policy, const PolicyParams& ref_policy,
                     const ClipKLConfig& clip_kl) {
  const PreparedViews p = prepare_views(groups, old_policy, ref_policy);
  return loss_from_views(tape, cur, p.views, LossKind::kGrpo, ShapingConfig{}, clip_kl);
}

}  // namespace thinktuning
