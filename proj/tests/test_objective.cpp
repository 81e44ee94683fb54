#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>
#include <vector>

#include "thinktuning/objective.hpp"
#include "thinktuning/policy.hpp"
#include "thinktuning/tasks.hpp"
#include "thinktuning/trainer.hpp"
#include "thinktuning/vocab.hpp"

using namespace thinktuning;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.embed_dim = 4;
  cfg.context_width = 6;
  cfg.hidden_dim = 8;
  return cfg;
}

Trajectory make_traj(const std::vector<int>& query, std::vector<int> output,
                     std::vector<std::uint8_t> origin = {}) {
  Trajectory t;
  t.query = query;
  t.output = std::move(output);
  if (origin.empty()) origin.assign(t.output.size(), 0);
  t.teacher_origin = std::move(origin);
  t.sampling_logprobs.assign(t.output.size(), 0.0);
  t.augmented = false;
  for (std::uint8_t m : t.teacher_origin) t.augmented = t.augmented || m;
  t.check_consistent();
  return t;
}

// Owns trajectories and frozen logprob vectors so TrajView pointers stay valid.
struct ViewBag {
  std::deque<Trajectory> trajs;
  std::deque<std::vector<double>> lps;
  std::vector<TrajView> views;

  void add(Trajectory t, const PolicyParams& old_p, const PolicyParams& ref_p, double adv,
           double a_min, double a_max) {
    trajs.push_back(std::move(t));
    lps.push_back(logprobs(old_p, trajs.back()));
    const std::vector<double>* old_lp = &lps.back();
    lps.push_back(logprobs(ref_p, trajs.back()));
    const std::vector<double>* ref_lp = &lps.back();
    TrajView v;
    v.traj = &trajs.back();
    v.advantage = adv;
    v.a_min = a_min;
    v.a_max = a_max;
    v.old_lps = old_lp;
    v.ref_lps = ref_lp;
    views.push_back(v);
  }
};

std::vector<Tensor> loss_grads(const PolicyParams& cur, const std::vector<TrajView>& views,
                               LossKind kind, const ShapingConfig& shaping,
                               const ClipKLConfig& clip_kl, double* value = nullptr) {
  Tape tape;
  LossResult res = loss_from_views(tape, cur, views, kind, shaping, clip_kl);
  if (value) *value = tape.value(res.loss).at(0);
  tape.backward(res.loss);
  std::vector<Tensor> grads;
  for (const Var& leaf : res.leaves.list()) grads.push_back(leaf.grad());
  return grads;
}

double max_abs_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].data.size(); ++k)
      m = std::max(m, std::fabs(a[i].data[k] - b[i].data[k]));
  return m;
}

}  // namespace

TEST_CASE("scalar forms: frozen reference values") {
  CHECK(aas_weight_value(0.5, 1e-4) == doctest::Approx(0.9998000399920016).epsilon(1e-15));
  CHECK(aas_weight_value(0.5, -1e-4) == doctest::Approx(1.0002000400080016).epsilon(1e-15));
  CHECK(aas_weight_value(0.25, 0.0) == 1.0);

  CHECK(importance_ratio(-1.25, -1.25) == 1.0);
  CHECK(importance_ratio(-0.5, -0.5 - std::log(2.0)) == doctest::Approx(2.0).epsilon(1e-15));

  CHECK(kl_k3(-1.0, -1.0) == 0.0);
  // ref - cur = ln 2: exp(ln 2) - ln 2 - 1.
  CHECK(kl_k3(-2.0, -2.0 + std::log(2.0)) ==
        doctest::Approx(0.3068528194400547).epsilon(1e-15));
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double a = -3.0 * rng.uniform01(), b = -3.0 * rng.uniform01();
    CHECK(kl_k3(a, b) >= 0.0);
  }

  // min(w*A, clip(w)*A) in all four quadrants.
  CHECK(clipped_term(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_term(1.5, -1.0, 0.2) == doctest::Approx(-1.5).epsilon(1e-15));
  CHECK(clipped_term(0.5, 1.0, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(clipped_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(clipped_term(1.0, 0.7, 0.2) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("shaping coefficient: exact endpoints, midpoint, degenerate, range") {
  const double c1 = 1e-4, c2 = -1e-4;
  CHECK(shaping_coeff(2.0, -1.0, 2.0, c1, c2) == c1);    // exactly, at a_max
  CHECK(shaping_coeff(-1.0, -1.0, 2.0, c1, c2) == c2);   // exactly, at a_min
  CHECK(shaping_coeff(0.5, -1.0, 2.0, c1, c2) == (c1 + c2) / 2.0);
  CHECK(shaping_coeff(1.0, 1.0, 1.0, c1, c2) == (c1 + c2) / 2.0);  // degenerate group

  // Linear in between: quarter point from the top.
  CHECK(shaping_coeff(1.25, -1.0, 2.0, 4.0, 8.0) == doctest::Approx(5.0).epsilon(1e-15));

  CHECK_THROWS(shaping_coeff(2.1, -1.0, 2.0, c1, c2));
  CHECK_THROWS(shaping_coeff(-1.1, -1.0, 2.0, c1, c2));
}

TEST_CASE("mask rule: strict thresholds on both sides") {
  ShapingConfig cfg;  // mask_high 0.9999, mask_low 0.0001
  CHECK(!aas_included(0.99995, 1.0, cfg));
  CHECK(aas_included(0.9999, 1.0, cfg));    // boundary stays included
  CHECK(aas_included(0.99995, -1.0, cfg));  // high prob, negative advantage
  CHECK(!aas_included(0.00005, -1.0, cfg));
  CHECK(aas_included(0.0001, -1.0, cfg));   // boundary stays included
  CHECK(aas_included(0.00005, 1.0, cfg));
  CHECK(aas_included(0.99995, 0.0, cfg));   // zero advantage never masked
  CHECK(aas_included(0.00005, 0.0, cfg));
  CHECK(aas_included(0.5, 1.0, cfg));
}

TEST_CASE("aas weight: forward ordering and frozen-denominator gradient") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double p = 0.001 + 0.998 * rng.uniform01();
    CHECK(aas_weight_value(p, 1e-4) < 1.0);
    CHECK(aas_weight_value(p, -1e-4) > 1.0);
    CHECK(aas_weight_value(p, 0.0) == 1.0);
  }

  for (double c : {1e-4, 0.0, -1e-4}) {
    const double p = 0.37;
    Tape tape;
    Var prob = tape.leaf(Tensor::scalar(p));
    Var w = aas_weight(tape, prob, c);
    CHECK(tape.value(w).at(0) == doctest::Approx(p / (p + c)).epsilon(1e-15));
    tape.backward(w);
    // Gradient contract: 1/(p+c), denominator frozen (not the true forward
    // derivative c/(p+c)^2).
    CHECK(prob.grad().at(0) == doctest::Approx(1.0 / (p + c)).epsilon(1e-14));
  }

  Tape tape;
  Var prob = tape.leaf(Tensor::scalar(0.00005));
  CHECK_THROWS((void)aas_weight(tape, prob, -1e-4));
}

TEST_CASE("per-logit oracle: rows sum to zero, target entry positive") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logits(8);
    for (double& x : logits) x = -3.0 + 6.0 * rng.uniform01();
    // softmax by hand
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    std::vector<double> probs(8);
    double z = 0.0;
    for (std::size_t i = 0; i < 8; ++i) z += (probs[i] = std::exp(logits[i] - mx));
    for (double& p : probs) p /= z;

    const int target = static_cast<int>(rng.uniform_int(8));
    for (double c : {1e-4, 0.0, -1e-4}) {
      const auto g = per_logit_grad_oracle(probs, target, c);
      double sum = 0.0;
      for (double x : g) sum += x;
      CHECK(std::fabs(sum) <= 1e-15);
      CHECK(g[static_cast<std::size_t>(target)] > 0.0);
      const double m = probs[static_cast<std::size_t>(target)];
      CHECK(g[static_cast<std::size_t>(target)] ==
            doctest::Approx((m / (m + c)) * (1.0 - m)).epsilon(1e-13));
    }
  }
}

TEST_CASE("gamma schedule: linear ramp hitting zero at the cutoff") {
  CHECK(schedule_gamma(0, 0.75, 100) == 0.75);
  CHECK(schedule_gamma(25, 0.75, 100) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(schedule_gamma(100, 0.75, 100) == 0.0);
  CHECK(schedule_gamma(5000, 0.75, 100) == 0.0);
  CHECK(schedule_gamma(3, 0.0, 100) == 0.0);
  CHECK(schedule_gamma(0, 0.9, 0) == 0.0);
  CHECK_THROWS(schedule_gamma(-1, 0.75, 100));
}

TEST_CASE("loss: ratio-one policy gradient identity") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 7);
  const Query q = gen_arithmetic(1, 1);

  ViewBag bag;
  bag.add(make_traj(q.tokens, {v.digit(3), v.eos()}), cur, cur, 0.8, -1.2, 0.8);
  bag.add(make_traj(q.tokens, {v.digit(5), v.digit(1), v.eos()}), cur, cur, -1.2, -1.2, 0.8);

  ClipKLConfig ck;
  ck.kl_beta = 0.0;
  Tape tape;
  LossResult res = loss_from_views(tape, cur, bag.views, LossKind::kThinkTuning, ShapingConfig{}, ck);
  // With old == cur every ratio is 1, the clip is inactive, so each
  // trajectory contributes exactly its advantage: loss = -(0.8 - 1.2)/2.
  CHECK(tape.value(res.loss).at(0) == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(res.stats.student_tokens == 5);
  CHECK(res.stats.teacher_tokens == 0);
  CHECK(res.stats.trajectories == 2);
  CHECK(res.stats.mean_ratio() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.stats.clip_rate() == 0.0);
}

TEST_CASE("loss: grpo and thinktuning coincide without augmented trajectories") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 9);
  const PolicyParams old_p = init_policy(v, tiny_model(), 10);
  const Query q = gen_arithmetic(2, 1);

  ViewBag bag;
  bag.add(make_traj(q.tokens, {v.digit(3), v.digit(1), v.eos()}), old_p, cur, 1.0, -1.0, 1.0);
  bag.add(make_traj(q.tokens, {v.digit(7), v.eos()}), old_p, cur, -1.0, -1.0, 1.0);

  ClipKLConfig ck;  // default beta > 0: include the KL path in the comparison
  double v_tt = 0.0, v_gr = 0.0;
  const auto g_tt = loss_grads(cur, bag.views, LossKind::kThinkTuning, ShapingConfig{}, ck, &v_tt);
  const auto g_gr = loss_grads(cur, bag.views, LossKind::kGrpo, ShapingConfig{}, ck, &v_gr);
  CHECK(v_tt == v_gr);
  CHECK(max_abs_diff(g_tt, g_gr) == 0.0);
}

TEST_CASE("loss: fully masked teacher tail contributes nothing") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 11);
  const PolicyParams old_p = init_policy(v, tiny_model(), 12);
  const Query q = gen_arithmetic(3, 1);

  // Same student prefix; one variant carries a teacher tail.
  const std::vector<int> prefix = {v.digit(2), v.digit(4)};
  std::vector<int> with_tail = prefix;
  with_tail.insert(with_tail.end(), {v.opinion(false), v.ans_open(), v.digit(6), v.ans_close()});
  std::vector<std::uint8_t> origin(with_tail.size(), 0);
  for (std::size_t i = prefix.size(); i < with_tail.size(); ++i) origin[i] = 1;

  ShapingConfig mask_all;
  mask_all.mask_high = 1e-9;  // every prob exceeds this: positive-advantage teacher tokens drop

  ClipKLConfig ck;
  ck.kl_beta = 0.0;

  ViewBag aug;
  aug.add(make_traj(q.tokens, with_tail, origin), old_p, cur, 0.9, -0.9, 0.9);
  ViewBag plain;
  plain.add(make_traj(q.tokens, prefix), old_p, cur, 0.9, -0.9, 0.9);

  double v_aug = 0.0, v_plain = 0.0;
  const auto g_aug = loss_grads(cur, aug.views, LossKind::kThinkTuning, mask_all, ck, &v_aug);
  const auto g_plain = loss_grads(cur, plain.views, LossKind::kThinkTuning, mask_all, ck, &v_plain);
  CHECK(v_aug == doctest::Approx(v_plain).epsilon(1e-15));
  CHECK(max_abs_diff(g_aug, g_plain) <= 1e-15);

  Tape tape;
  LossResult res = loss_from_views(tape, cur, aug.views, LossKind::kThinkTuning, mask_all, ck);
  CHECK(res.stats.teacher_tokens == 4);
  CHECK(res.stats.masked_tokens == 4);
  CHECK(res.stats.mask_rate() == 1.0);

  // An entirely masked trajectory puts zero in the surrogate average.
  ViewBag all_teacher;
  all_teacher.add(make_traj(q.tokens, {v.ans_open(), v.digit(6), v.ans_close()}, {1, 1, 1}),
                  old_p, cur, 0.9, -0.9, 0.9);
  double v_zero = -1.0;
  const auto g_zero =
      loss_grads(cur, all_teacher.views, LossKind::kThinkTuning, mask_all, ck, &v_zero);
  CHECK(v_zero == 0.0);
  double mx = 0.0;
  for (const Tensor& t : g_zero)
    for (double x : t.data) mx = std::max(mx, std::fabs(x));
  CHECK(mx == 0.0);
}

TEST_CASE("loss: negative-advantage mask side drops improbable teacher tokens") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 13);
  const Query q = gen_arithmetic(4, 1);

  std::vector<int> out = {v.digit(1), v.opinion(true), v.ans_open(), v.digit(9), v.ans_close()};
  std::vector<std::uint8_t> origin = {0, 1, 1, 1, 1};

  ShapingConfig drop_all;
  drop_all.mask_low = 1.0 - 1e-9;  // every prob is below this: negative advantage drops all

  ClipKLConfig ck;
  ck.kl_beta = 0.0;

  ViewBag aug;
  aug.add(make_traj(q.tokens, out, origin), cur, cur, -0.9, -0.9, 0.9);
  ViewBag plain;
  plain.add(make_traj(q.tokens, {out[0]}), cur, cur, -0.9, -0.9, 0.9);

  double v_aug = 0.0, v_plain = 0.0;
  const auto g_aug = loss_grads(cur, aug.views, LossKind::kThinkTuning, drop_all, ck, &v_aug);
  const auto g_plain = loss_grads(cur, plain.views, LossKind::kThinkTuning, drop_all, ck, &v_plain);
  CHECK(v_aug == doctest::Approx(v_plain).epsilon(1e-15));
  CHECK(max_abs_diff(g_aug, g_plain) <= 1e-15);
}

TEST_CASE("loss: clip dead zone stops the gradient but keeps the value") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 15);
  const Query q = gen_arithmetic(5, 1);
  ClipKLConfig ck;
  ck.clip_eps = 0.2;
  ck.kl_beta = 0.0;

  // One-token trajectory; shift the frozen old logprob so the ratio is ~1.5.
  Trajectory t = make_traj(q.tokens, {v.digit(8)});
  const auto cur_lp = logprobs(cur, t);
  std::vector<double> old_lp = {cur_lp[0] - std::log(1.5)};
  std::vector<double> ref_lp = cur_lp;

  TrajView view;
  view.traj = &t;
  view.a_min = -1.0;
  view.a_max = 1.0;
  view.old_lps = &old_lp;
  view.ref_lps = &ref_lp;

  SUBCASE("positive advantage: pinned to (1+eps)*A, zero gradient") {
    view.advantage = 1.0;
    double value = 0.0;
    const auto g = loss_grads(cur, {view}, LossKind::kThinkTuning, ShapingConfig{}, ck, &value);
    CHECK(value == doctest::Approx(-1.2).epsilon(1e-9));
    double mx = 0.0;
    for (const Tensor& gt : g)
      for (double x : gt.data) mx = std::max(mx, std::fabs(x));
    CHECK(mx == 0.0);

    Tape tape;
    LossResult res = loss_from_views(tape, cur, {view}, LossKind::kThinkTuning, ShapingConfig{}, ck);
    CHECK(res.stats.clip_active == 1);
    CHECK(res.stats.clip_rate() == 1.0);
  }

  SUBCASE("negative advantage: the unclipped branch stays live") {
    view.advantage = -1.0;
    double value = 0.0;
    const auto g = loss_grads(cur, {view}, LossKind::kThinkTuning, ShapingConfig{}, ck, &value);
    CHECK(value == doctest::Approx(1.5).epsilon(1e-9));
    double mx = 0.0;
    for (const Tensor& gt : g)
      for (double x : gt.data) mx = std::max(mx, std::fabs(x));
    CHECK(mx > 0.0);

    Tape tape;
    LossResult res = loss_from_views(tape, cur, {view}, LossKind::kThinkTuning, ShapingConfig{}, ck);
    CHECK(res.stats.clip_active == 0);
  }
}

TEST_CASE("loss: kl term matches the scalar k3 reference") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 17);
  const PolicyParams old_p = init_policy(v, tiny_model(), 18);
  const PolicyParams ref_p = init_policy(v, tiny_model(), 19);
  const Query q = gen_arithmetic(6, 1);

  ViewBag bag;
  bag.add(make_traj(q.tokens, {v.digit(3), v.digit(2), v.eos()}), old_p, ref_p, 0.5, -0.5, 0.5);
  bag.add(make_traj(q.tokens, {v.digit(9), v.eos()}, {0, 1}), old_p, ref_p, -0.5, -0.5, 0.5);

  ClipKLConfig off;
  off.kl_beta = 0.0;
  ClipKLConfig on;
  on.kl_beta = 0.04;

  double v_off = 0.0, v_on = 0.0;
  (void)loss_grads(cur, bag.views, LossKind::kThinkTuning, ShapingConfig{}, off, &v_off);
  (void)loss_grads(cur, bag.views, LossKind::kThinkTuning, ShapingConfig{}, on, &v_on);

  // Hand k3: per-trajectory mean over covered tokens of k3(cur, ref).
  double kl_sum = 0.0;
  for (const TrajView& view : bag.views) {
    const auto cur_lp = logprobs(cur, *view.traj);
    double s = 0.0;
    for (std::size_t i = 0; i < cur_lp.size(); ++i) s += kl_k3(cur_lp[i], (*view.ref_lps)[i]);
    kl_sum += s / static_cast<double>(cur_lp.size());
  }
  CHECK(v_on - v_off == doctest::Approx(0.04 * kl_sum / 2.0).epsilon(1e-9));

  Tape tape;
  LossResult res = loss_from_views(tape, cur, bag.views, LossKind::kThinkTuning, ShapingConfig{}, on);
  CHECK(res.stats.kl_sum == doctest::Approx(kl_sum).epsilon(1e-9));

  // Student-only KL coverage shrinks the covered set.
  ClipKLConfig student_only = on;
  student_only.kl_on_teacher_tokens = false;
  double v_student = 0.0;
  (void)loss_grads(cur, bag.views, LossKind::kThinkTuning, ShapingConfig{}, student_only,
                   &v_student);
  double kl_student = 0.0;
  for (const TrajView& view : bag.views) {
    const auto cur_lp = logprobs(cur, *view.traj);
    double s = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < cur_lp.size(); ++i)
      if (!view.traj->teacher_origin[i]) {
        s += kl_k3(cur_lp[i], (*view.ref_lps)[i]);
        n++;
      }
    if (n) s /= static_cast<double>(n);
    kl_student += s;
  }
  CHECK(v_student - v_off == doctest::Approx(0.04 * kl_student / 2.0).epsilon(1e-9));
}

TEST_CASE("loss: group entry points match hand-built views") {
  const Vocab v = Vocab::standard();
  const PolicyParams cur = init_policy(v, tiny_model(), 21);
  const PolicyParams old_p = init_policy(v, tiny_model(), 22);
  const PolicyParams ref_p = init_policy(v, tiny_model(), 23);

  const Query q = gen_arithmetic(7, 1);
  Group g;
  g.query = q;
  g.trajectories = {
      make_traj(q.tokens, {v.digit(1), v.eos()}),
      make_traj(q.tokens, {v.digit(2), v.opinion(true), v.eos()}, {0, 1, 1}),
      make_traj(q.tokens, {v.digit(3), v.digit(4), v.eos()}),
  };
  g.rewards = {1.0, 0.0, 1.0};
  normalize_advantages(g);

  ShapingConfig shaping;
  ClipKLConfig ck;

  Tape t1;
  LossResult from_groups = thinktuning_loss(t1, {g}, cur, old_p, ref_p, shaping, ck);

  ViewBag bag;
  for (std::size_t i = 0; i < g.trajectories.size(); ++i)
    bag.add(g.trajectories[i], old_p, ref_p, g.advantages[i], g.a_min, g.a_max);
  Tape t2;
  LossResult from_views = loss_from_views(t2, cur, bag.views, LossKind::kThinkTuning, shaping, ck);

  CHECK(t1.value(from_groups.loss).at(0) == t2.value(from_views.loss).at(0));
  CHECK(from_groups.stats.student_tokens == from_views.stats.student_tokens);
  CHECK(from_groups.stats.teacher_tokens == from_views.stats.teacher_tokens);

  Tape t3;
  LossResult grpo = grpo_loss(t3, {g}, cur, old_p, ref_p, ck);
  CHECK(grpo.stats.teacher_tokens == 0);
  CHECK(grpo.stats.student_tokens == 8);
}
