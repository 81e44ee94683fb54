#include "thinktuning/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace thinktuning {

Adam::Adam(const OptimConfig& cfg, const PolicyParams& params) : cfg_(cfg) {
  if (cfg.kind != "adam") throw std::invalid_argument("optimizer: unknown kind \"" + cfg.kind + "\"");
  if (cfg.lr <= 0.0) throw std::invalid_argument("optimizer: lr must be positive");
  for (const Tensor* t : params.tensors()) {
    state_.m.push_back(Tensor::zeros(t->shape));
    state_.v.push_back(Tensor::zeros(t->shape));
  }
}

void Adam::update(PolicyParams& params, const std::vector<Tensor>& grads) {
  auto tensors = params.tensors();
  if (grads.size() != tensors.size())
    throw std::invalid_argument("optimizer: gradient list does not match parameter list");

  state_.t += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.t));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& p = *tensors[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      throw std::invalid_argument("optimizer: gradient shape mismatch at tensor " + std::to_string(i));
    Tensor& m = state_.m[i];
    Tensor& v = state_.v[i];
    for (std::int64_t k = 0; k < p.numel(); ++k) {
      m.at(k) = cfg_.beta1 * m.at(k) + (1.0 - cfg_.beta1) * g.at(k);
      v.at(k) = cfg_.beta2 * v.at(k) + (1.0 - cfg_.beta2) * g.at(k) * g.at(k);
      const double mhat = m.at(k) / bc1;
      const double vhat = v.at(k) / bc2;
      p.at(k) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::set_state(State s) {
  if (s.m.size() != state_.m.size() || s.v.size() != state_.v.size())
    throw std::invalid_argument("optimizer: state tensor count mismatch");
  state_ = std::move(s);
}

}  // namespace thinktuning
