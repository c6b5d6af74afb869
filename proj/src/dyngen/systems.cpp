#include "vidyn/dyngen/systems.hpp"

#include <cmath>
#include <string>

#include "vidyn/common/error.hpp"

namespace vidyn::dyngen {

namespace {

constexpr double kStateLimit = 1e8;

void check_finite(double v, const char* system, std::size_t step) {
  if (!std::isfinite(v) || std::abs(v) > kStateLimit)
    throw IntegrationDiverged(std::string(system) + " state diverged at step " +
                                  std::to_string(step),
                              static_cast<long>(step));
}

}  // namespace

MgParams sample_mg_params(RngStream& rng) {
  MgParams p;
  p.alpha = rng.uniform(0.2, 0.4);
  p.gamma = rng.uniform(0.05, 0.1);
  p.tau = rng.uniform(20.0, 40.0);
  return p;
}

VdpParams sample_vdp_params(RngStream& rng) {
  VdpParams p;
  p.gamma = rng.uniform(1.0, 4.0);
  p.alpha = rng.uniform(0.25, 1.0);
  p.theta = rng.uniform(0.25, 1.0);
  p.u_ref = 1.0;
  return p;
}

std::vector<double> integrate_mackey_glass(
    const MgParams& params, double dt, std::size_t n_steps,
    const std::function<double(double)>& history, std::size_t burn_in_steps) {
  if (dt <= 0.0) throw UsageError("integrate_mackey_glass: dt must be > 0");
  if (params.tau < dt)
    throw UsageError("integrate_mackey_glass: tau must be >= dt");

  const double lag = params.tau / dt;  // delay in (fractional) grid steps
  const std::size_t H = static_cast<std::size_t>(std::ceil(lag));
  const std::size_t total = H + burn_in_steps + n_steps;

  std::vector<double> v(total + 1);
  std::vector<double> f(total + 1, 0.0);
  for (std::size_t k = 0; k <= H; ++k)
    v[k] = history((static_cast<double>(k) - static_cast<double>(H)) * dt);

  // Delayed value at fractional grid position k_real - lag.
  const auto delayed = [&](double k_real) {
    const double ridx = k_real - lag;
    const auto i0 = static_cast<std::size_t>(ridx);
    const double frac = ridx - static_cast<double>(i0);
    return v[i0] * (1.0 - frac) + v[i0 + 1] * frac;
  };
  const auto rhs = [&](double phi, double phi_d) {
    const double d5 = phi_d * phi_d * phi_d * phi_d * phi_d;
    const double d10 = d5 * d5;
    return params.alpha * phi_d / (1.0 + d10) - params.gamma * phi;
  };

  // Two RK4 bootstrap steps, then AB3. The delayed argument lies deep in the
  // prescribed history (tau >= dt), so every RK4 stage reads known values.
  for (std::size_t k = H; k < H + 2 && k < total; ++k) {
    const double kr = static_cast<double>(k);
    const double k1 = rhs(v[k], delayed(kr));
    const double k2 = rhs(v[k] + 0.5 * dt * k1, delayed(kr + 0.5));
    const double k3 = rhs(v[k] + 0.5 * dt * k2, delayed(kr + 0.5));
    const double k4 = rhs(v[k] + dt * k3, delayed(kr + 1.0));
    f[k] = k1;
    v[k + 1] = v[k] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(v[k + 1], "mackey-glass", k + 1 - H);
  }
  for (std::size_t k = H + 2; k < total; ++k) {
    f[k] = rhs(v[k], delayed(static_cast<double>(k)));
    v[k + 1] =
        v[k] + dt / 12.0 * (23.0 * f[k] - 16.0 * f[k - 1] + 5.0 * f[k - 2]);
    check_finite(v[k + 1], "mackey-glass", k + 1 - H);
  }

  std::vector<double> out(n_steps + 1);
  for (std::size_t j = 0; j <= n_steps; ++j) out[j] = v[H + burn_in_steps + j];
  return out;
}

VdpPath integrate_vdp_ou(const VdpParams& params, double dt,
                         std::size_t n_steps, std::size_t burn_in_steps,
                         double phi0, double dphi0, RngStream& forcing_rng) {
  if (dt <= 0.0) throw UsageError("integrate_vdp_ou: dt must be > 0");
  const std::size_t total = burn_in_steps + n_steps;

  // Exact OU path on the fine grid, started from the stationary law.
  std::vector<double> u(total + 1);
  const double decay = std::exp(-params.theta * dt);
  const double diff = params.u_ref * std::sqrt(1.0 - decay * decay);
  u[0] = params.u_ref * forcing_rng.normal();
  for (std::size_t k = 0; k < total; ++k)
    u[k + 1] = u[k] * decay + diff * forcing_rng.normal();

  const auto rhs = [&](double phi, double w, double uk, double* dphi,
                       double* dw) {
    *dphi = w;
    *dw = params.gamma * (1.0 - phi * phi) * w - phi - params.alpha * uk;
  };

  std::vector<double> pos(total + 1);
  std::vector<double> fp(total + 1, 0.0), fw(total + 1, 0.0);
  double phi = phi0, w = dphi0;
  pos[0] = phi;
  for (std::size_t k = 0; k < total; ++k) {
    double dphi, dw;
    if (k < 2) {
      // RK4 bootstrap; u is constant within the step.
      double k1p, k1w, k2p, k2w, k3p, k3w, k4p, k4w;
      rhs(phi, w, u[k], &k1p, &k1w);
      rhs(phi + 0.5 * dt * k1p, w + 0.5 * dt * k1w, u[k], &k2p, &k2w);
      rhs(phi + 0.5 * dt * k2p, w + 0.5 * dt * k2w, u[k], &k3p, &k3w);
      rhs(phi + dt * k3p, w + dt * k3w, u[k], &k4p, &k4w);
      fp[k] = k1p;
      fw[k] = k1w;
      phi += dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    } else {
      rhs(phi, w, u[k], &dphi, &dw);
      fp[k] = dphi;
      fw[k] = dw;
      phi += dt / 12.0 * (23.0 * fp[k] - 16.0 * fp[k - 1] + 5.0 * fp[k - 2]);
      w += dt / 12.0 * (23.0 * fw[k] - 16.0 * fw[k - 1] + 5.0 * fw[k - 2]);
    }
    check_finite(phi, "van-der-pol", k + 1);
    check_finite(w, "van-der-pol", k + 1);
    pos[k + 1] = phi;
  }

  VdpPath out;
  out.phi.resize(n_steps + 1);
  out.u.resize(n_steps + 1);
  for (std::size_t j = 0; j <= n_steps; ++j) {
    out.phi[j] = pos[burn_in_steps + j];
    out.u[j] = u[burn_in_steps + j];
  }
  return out;
}

}  // namespace vidyn::dyngen
