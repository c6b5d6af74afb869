#include "vidyn/optim/adam.hpp"

#include <cmath>

#include "vidyn/common/error.hpp"

namespace vidyn::optim {

double cosine_lr(std::size_t l, const LrSchedule& sched) {
  if (sched.L < 1) throw UsageError("cosine_lr: schedule length must be >= 1");
  if (l > sched.L)
    throw UsageError("cosine_lr: iteration " + std::to_string(l) +
                     " beyond schedule length " + std::to_string(sched.L));
  const double phase = M_PI * static_cast<double>(l) / static_cast<double>(sched.L);
  return sched.xi_min + 0.5 * (sched.xi_max - sched.xi_min) * (1.0 + std::cos(phase));
}

double global_grad_norm(const std::vector<nn::ParamView>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (std::size_t i = 0; i < g.size; ++i) {
      const double x = g.data[i];
      if (!std::isfinite(x)) throw PoisonedGradient(g.name, i);
      sq += x * x;
    }
  }
  return std::sqrt(sq);
}

void adam_step(const std::vector<nn::ParamView>& params,
               const std::vector<nn::ParamView>& grads, AdamState& state,
               double rate, const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: parameter/gradient view mismatch");
  std::size_t total = 0;
  for (const auto& p : params) total += p.size;
  if (state.m.size() != total) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
    state.step = 0;
  }

  double scale = 1.0;
  const double norm = global_grad_norm(grads);
  if (cfg.clip > 0.0 && norm > cfg.clip) scale = cfg.clip / norm;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  std::size_t off = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size != grads[k].size)
      throw ShapeError("adam_step: view " + params[k].name + " size mismatch");
    double* p = params[k].data;
    const double* g = grads[k].data;
    for (std::size_t i = 0; i < params[k].size; ++i) {
      const double gi = scale * g[i];
      const double m = cfg.beta1 * state.m[off] + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * state.v[off] + (1.0 - cfg.beta2) * gi * gi;
      state.m[off] = m;
      state.v[off] = v;
      p[i] -= rate * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      ++off;
    }
  }
}

}  // namespace vidyn::optim
