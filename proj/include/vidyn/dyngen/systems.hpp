#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vidyn/common/rng.hpp"

namespace vidyn::dyngen {

// Delay-feedback system d phi/dt = alpha phi(t-tau) / (1 + phi(t-tau)^10)
// - gamma phi(t).
struct MgParams {
  double alpha;
  double gamma;
  double tau;
};

// Forced oscillator phi'' - gamma (1 - phi^2) phi' + phi + alpha u = 0 with
// Ornstein-Uhlenbeck forcing du = -theta u dt + u_ref sqrt(2 theta) dW.
struct VdpParams {
  double gamma;
  double alpha;
  double theta;
  double u_ref = 1.0;
};

// Parameter priors: independent uniforms over the generation ranges.
MgParams sample_mg_params(RngStream& rng);
VdpParams sample_vdp_params(RngStream& rng);

// Integrates the delay system on a fine grid of step dt with a third-order
// Adams-Bashforth scheme; the first two steps are bootstrapped with classical
// RK4 so the startup error stays below the AB3 accumulation. The delayed term
// is linearly interpolated between stored grid values. history(t) prescribes
// phi on [-tau, 0]. Returns n_steps+1 values starting after burn_in_steps.
// Throws IntegrationDiverged (with the step index) on non-finite state.
std::vector<double> integrate_mackey_glass(
    const MgParams& params, double dt, std::size_t n_steps,
    const std::function<double(double)>& history, std::size_t burn_in_steps = 0);

struct VdpPath {
  std::vector<double> phi;  // position
  std::vector<double> u;    // forcing sampled on the same grid
};

// Same AB3+RK4 scheme on the two-state oscillator. The forcing uses the exact
// OU discretization u_{k+1} = u_k e^{-theta dt} + u_ref sqrt(1 - e^{-2 theta
// dt}) xi_k, started from the stationary law, and is held constant within
// each fine step. Returns n_steps+1 (phi, u) pairs after burn_in_steps.
VdpPath integrate_vdp_ou(const VdpParams& params, double dt,
                         std::size_t n_steps, std::size_t burn_in_steps,
                         double phi0, double dphi0, RngStream& forcing_rng);

}  // namespace vidyn::dyngen
