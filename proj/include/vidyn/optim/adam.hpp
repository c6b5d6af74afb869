#pragma once

#include <cstddef>
#include <vector>

#include "vidyn/nn/tensor.hpp"

namespace vidyn::optim {

// Cosine decay from xi_max (l=0) to xi_min (l=L), no restarts.
struct LrSchedule {
  double xi_min = 1e-4;
  double xi_max = 1e-3;
  std::size_t L = 30000;
};

double cosine_lr(std::size_t l, const LrSchedule& sched);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;  // added inside the sqrt denominator
  double clip = 5.0;  // global L2-norm gradient clip; 0 disables
};

// Moment buffers over the flat concatenation of a model's parameter views, in
// canonical order.
struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// L2 norm over all gradient views; throws PoisonedGradient on the first
// non-finite entry.
double global_grad_norm(const std::vector<nn::ParamView>& grads);

// One bias-corrected update. Gradients are first scaled by the global-norm
// clip (when enabled); the grad buffers themselves are left untouched.
void adam_step(const std::vector<nn::ParamView>& params,
               const std::vector<nn::ParamView>& grads, AdamState& state,
               double rate, const AdamConfig& cfg);

}  // namespace vidyn::optim
