#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace titlegen::tensor {

// Flat Adam state over the concatenation of every trainable parameter.
// The learning rate follows an inverse-time schedule
//   lr(t) = base_lr / (1 + decay * t)
// evaluated at the incremented step counter, so it is strictly decreasing
// whenever decay > 0.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double base_lr = 0.005;
  double decay = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled weight decay, off by default.
  double weight_decay = 0.0;

  static AdamState init(std::size_t param_count, double base_lr = 0.005,
                        double decay = 0.0001);

  double effective_lr(std::uint64_t step) const;
  // Learning rate the most recent step used (base_lr before any step).
  double current_lr() const;
};

// One bias-corrected Adam update in place. params/grads/state lengths must
// agree.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state);

}  // namespace titlegen::tensor
