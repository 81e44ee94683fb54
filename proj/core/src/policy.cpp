#include "thinktuning/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace thinktuning {

void Trajectory::check_consistent() const {
  if (output.size() != teacher_origin.size() || output.size() != sampling_logprobs.size())
    throw std::invalid_argument("trajectory: output/origin/logprob lengths differ");
  if (!augmented)
    for (auto m : teacher_origin)
      if (m) throw std::invalid_argument("trajectory: teacher token in unaugmented trajectory");
}

std::vector<Tensor*> PolicyParams::tensors() {
  return {&embedding, &enc_w1, &enc_b1, &enc_w2, &enc_b2, &out_proj, &out_bias};
}

std::vector<const Tensor*> PolicyParams::tensors() const {
  return {&embedding, &enc_w1, &enc_b1, &enc_w2, &enc_b2, &out_proj, &out_bias};
}

const std::vector<std::string>& PolicyParams::tensor_names() {
  static const std::vector<std::string> names = {
      "embedding", "enc_w1", "enc_b1", "enc_w2", "enc_b2", "out_proj", "out_bias"};
  return names;
}

std::int64_t PolicyParams::param_count() const {
  std::int64_t n = 0;
  for (const Tensor* t : tensors()) n += t->numel();
  return n;
}

PolicyParams init_policy(const Vocab& vocab, const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.embed_dim <= 0 || cfg.context_width <= 0 || cfg.hidden_dim <= 0)
    throw std::invalid_argument("init_policy: dimensions must be positive");
  if (cfg.query_width < 0) throw std::invalid_argument("init_policy: query_width must be >= 0");
  const int v = vocab.size();
  PolicyParams p;
  p.vocab_size = v;
  p.embed_dim = cfg.embed_dim;
  p.query_width = cfg.query_width;
  p.context_width = cfg.context_width;
  p.hidden_dim = cfg.hidden_dim;
  p.embedding = Tensor::zeros({v, cfg.embed_dim});
  p.enc_w1 = Tensor::zeros(
      {static_cast<std::int64_t>(cfg.query_width + cfg.context_width) * cfg.embed_dim,
       cfg.hidden_dim});
  p.enc_b1 = Tensor::zeros({cfg.hidden_dim});
  p.enc_w2 = Tensor::zeros({cfg.hidden_dim, cfg.embed_dim});
  p.enc_b2 = Tensor::zeros({cfg.embed_dim});
  p.out_proj = Tensor::zeros({cfg.embed_dim, v});
  p.out_bias = Tensor::zeros({v});

  const RngKey root = RngKey(seed).child(stream::kInit);
  auto tensors = p.tensors();
  // Biases stay zero; weight tensors get scaled Gaussians from per-tensor streams.
  const bool is_weight[] = {true, true, false, true, false, true, false};
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!is_weight[i]) continue;
    Rng rng = root.child(i).stream();
    for (double& x : tensors[i]->data) x = cfg.init_std * rng.gaussian();
  }
  p.out_bias.at(vocab.marker()) = cfg.marker_init_logit_bias;
  return p;
}

PolicyParams snapshot(const PolicyParams& params) { return params; }

std::vector<std::vector<std::int64_t>> make_context_windows(const std::vector<int>& query,
                                                            const std::vector<int>& output,
                                                            int context_width) {
  if (context_width <= 0) throw std::invalid_argument("make_context_windows: window must be positive");
  std::vector<int> prefix = query;
  std::vector<std::vector<std::int64_t>> windows;
  windows.reserve(output.size());
  for (std::size_t t = 0; t < output.size(); ++t) {
    std::vector<std::int64_t> w(static_cast<std::size_t>(context_width), -1);
    const std::int64_t len = static_cast<std::int64_t>(prefix.size());
    for (int j = 0; j < context_width; ++j) {
      const std::int64_t src = len - context_width + j;
      if (src >= 0) w[static_cast<std::size_t>(j)] = prefix[static_cast<std::size_t>(src)];
    }
    windows.push_back(std::move(w));
    prefix.push_back(output[t]);
  }
  return windows;
}

namespace {

std::vector<std::int64_t> window_of(const std::vector<int>& prefix, int context_width) {
  std::vector<std::int64_t> w(static_cast<std::size_t>(context_width), -1);
  const std::int64_t len = static_cast<std::int64_t>(prefix.size());
  for (int j = 0; j < context_width; ++j) {
    const std::int64_t src = len - context_width + j;
    if (src >= 0) w[static_cast<std::size_t>(j)] = prefix[static_cast<std::size_t>(src)];
  }
  return w;
}

// Log-softmax of a logit vector, max-subtracted; same operation order as the
// tape's row_log_softmax so both paths agree to the last ulp in practice.
std::vector<double> log_softmax_vec(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  const double lz = std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - mx - lz;
  return out;
}

}  // namespace

std::vector<double> forward_logits(const PolicyParams& params,
                                   const std::vector<std::int64_t>& window) {
  const int W = params.context_width, d = params.embed_dim, h = params.hidden_dim;
  const int v = params.vocab_size;
  if (static_cast<int>(window.size()) != W)
    throw std::invalid_argument("forward_logits: window size mismatch");

  // x = concatenated window embeddings (pad index -1 -> zero vector)
  std::vector<double> x(static_cast<std::size_t>(W) * d, 0.0);
  for (int j = 0; j < W; ++j) {
    const std::int64_t tok = window[static_cast<std::size_t>(j)];
    if (tok == -1) continue;
    if (tok < 0 || tok >= v) throw std::out_of_range("forward_logits: token id out of range");
    for (int e = 0; e < d; ++e) x[static_cast<std::size_t>(j * d + e)] = params.embedding.at(tok, e);
  }

  std::vector<double> h1(static_cast<std::size_t>(h), 0.0);
  for (int i = 0; i < W * d; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    for (int j = 0; j < h; ++j) h1[static_cast<std::size_t>(j)] += xi * params.enc_w1.at(i, j);
  }
  for (int j = 0; j < h; ++j) {
    h1[static_cast<std::size_t>(j)] += params.enc_b1.at(j);
    h1[static_cast<std::size_t>(j)] = std::max(h1[static_cast<std::size_t>(j)], 0.0);
  }

  std::vector<double> ctx(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < h; ++i) {
    const double hi = h1[static_cast<std::size_t>(i)];
    if (hi == 0.0) continue;
    for (int j = 0; j < d; ++j) ctx[static_cast<std::size_t>(j)] += hi * params.enc_w2.at(i, j);
  }
  for (int j = 0; j < d; ++j) ctx[static_cast<std::size_t>(j)] += params.enc_b2.at(j);

  std::vector<double> logits(static_cast<std::size_t>(v), 0.0);
  for (int i = 0; i < d; ++i) {
    const double ci = ctx[static_cast<std::size_t>(i)];
    if (ci == 0.0) continue;
    for (int j = 0; j < v; ++j) logits[static_cast<std::size_t>(j)] += ci * params.out_proj.at(i, j);
  }
  for (int j = 0; j < v; ++j) logits[static_cast<std::size_t>(j)] += params.out_bias.at(j);
  return logits;
}

std::vector<double> next_distribution(const PolicyParams& params, const std::vector<int>& context) {
  auto lp = log_softmax_vec(forward_logits(params, window_of(context, params.context_width)));
  std::vector<double> probs(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
  return probs;
}

std::vector<Trajectory> sample_rollouts(const PolicyParams& params, const std::vector<int>& query,
                                        int n, int max_len, double temperature, int eos_id,
                                        const RngKey& key) {
  if (n <= 0) throw std::invalid_argument("sample_rollouts: n must be positive");
  if (max_len <= 0) throw std::invalid_argument("sample_rollouts: max_len must be positive");
  if (temperature <= 0.0) throw std::invalid_argument("sample_rollouts: temperature must be positive");

  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = key.child(static_cast<std::uint64_t>(i)).stream();
    Trajectory traj;
    traj.query = query;
    std::vector<int> prefix = query;
    for (int t = 0; t < max_len; ++t) {
      auto logits = forward_logits(params, window_of(prefix, params.context_width));
      if (temperature != 1.0)
        for (double& z : logits) z /= temperature;
      const auto lp = log_softmax_vec(logits);
      std::vector<double> probs(lp.size());
      for (std::size_t j = 0; j < lp.size(); ++j) probs[j] = std::exp(lp[j]);
      const int tok = static_cast<int>(rng.categorical(probs));
      traj.output.push_back(tok);
      traj.teacher_origin.push_back(0);
      traj.sampling_logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
      prefix.push_back(tok);
      if (tok == eos_id) break;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<int> greedy_decode(const PolicyParams& params, const std::vector<int>& query,
                               int max_len, int eos_id) {
  if (max_len <= 0) throw std::invalid_argument("greedy_decode: max_len must be positive");
  std::vector<int> out;
  std::vector<int> prefix = query;
  for (int t = 0; t < max_len; ++t) {
    const auto logits = forward_logits(params, window_of(prefix, params.context_width));
    int best = 0;
    for (int j = 1; j < static_cast<int>(logits.size()); ++j)
      if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(best)]) best = j;
    out.push_back(best);
    prefix.push_back(best);
    if (best == eos_id) break;
  }
  return out;
}

std::vector<double> logprobs(const PolicyParams& params, const Trajectory& traj,
                             double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("logprobs: temperature must be positive");
  traj.check_consistent();
  const auto windows = make_context_windows(traj.query, traj.output, params.context_width);
  std::vector<double> out(traj.output.size());
  for (std::size_t t = 0; t < traj.output.size(); ++t) {
    auto logits = forward_logits(params, windows[t]);
    if (temperature != 1.0)
      for (double& z : logits) z /= temperature;
    const auto lp = log_softmax_vec(logits);
    out[t] = lp[static_cast<std::size_t>(traj.output[t])];
  }
  return out;
}

PolicyLeaves PolicyLeaves::bind(Tape& tape, const PolicyParams& params) {
  PolicyLeaves l;
  l.embedding = tape.leaf(params.embedding);
  l.enc_w1 = tape.leaf(params.enc_w1);
  l.enc_b1 = tape.leaf(params.enc_b1);
  l.enc_w2 = tape.leaf(params.enc_w2);
  l.enc_b2 = tape.leaf(params.enc_b2);
  l.out_proj = tape.leaf(params.out_proj);
  l.out_bias = tape.leaf(params.out_bias);
  return l;
}

std::vector<Var> PolicyLeaves::list() const {
  return {embedding, enc_w1, enc_b1, enc_w2, enc_b2, out_proj, out_bias};
}

Var policy_logits_rows(Tape& tape, const PolicyLeaves& leaves, int context_width, int embed_dim,
                       const std::vector<std::vector<std::int64_t>>& windows) {
  if (windows.empty()) throw std::invalid_argument("policy_logits_rows: no windows");
  const auto t_count = static_cast<std::int64_t>(windows.size());
  std::vector<std::int64_t> flat;
  flat.reserve(windows.size() * static_cast<std::size_t>(context_width));
  for (const auto& w : windows) {
    if (static_cast<int>(w.size()) != context_width)
      throw std::invalid_argument("policy_logits_rows: window size mismatch");
    flat.insert(flat.end(), w.begin(), w.end());
  }
  Var x = reshape(gather_rows(leaves.embedding, flat),
                  {t_count, static_cast<std::int64_t>(context_width) * embed_dim});
  Var h1 = maximum(matmul(x, leaves.enc_w1) + leaves.enc_b1, tape.constant(0.0));
  Var ctx = matmul(h1, leaves.enc_w2) + leaves.enc_b2;
  return matmul(ctx, leaves.out_proj) + leaves.out_bias;
}

Var policy_logprob_rows(Tape& tape, const PolicyLeaves& leaves, const PolicyParams& params,
                        const Trajectory& traj) {
  traj.check_consistent();
  if (traj.output.empty()) throw std::invalid_argument("policy_logprob_rows: empty output");
  const auto windows = make_context_windows(traj.query, traj.output, params.context_width);
  Var logits = policy_logits_rows(tape, leaves, params.context_width, params.embed_dim, windows);
  std::vector<std::int64_t> targets(traj.output.begin(), traj.output.end());
  return gather_at(row_log_softmax(logits), targets);
}

}  // namespace thinktuning
