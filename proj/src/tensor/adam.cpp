#include "titlegen/tensor/adam.hpp"

#include <cmath>

#include "titlegen/errors.hpp"

namespace titlegen::tensor {

AdamState AdamState::init(std::size_t param_count, double base_lr,
                          double decay) {
  AdamState s;
  s.m.assign(param_count, 0.0);
  s.v.assign(param_count, 0.0);
  s.base_lr = base_lr;
  s.decay = decay;
  return s;
}

double AdamState::effective_lr(std::uint64_t step) const {
  return base_lr / (1.0 + decay * static_cast<double>(step));
}

double AdamState::current_lr() const {
  return t == 0 ? base_lr : effective_lr(t);
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw ContractError("adam_step: params/grads/state lengths disagree");
  state.t += 1;
  const double lr = state.effective_lr(state.t);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    if (state.weight_decay != 0.0)
      params[i] -= lr * state.weight_decay * params[i];
  }
}

}  // namespace titlegen::tensor
