#include "vidyn/dyngen/dataset.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "vidyn/common/error.hpp"

namespace vidyn::dyngen {

const char* system_name(SystemKind k) {
  return k == SystemKind::kMackeyGlass ? "mackey_glass" : "vdp";
}

SystemKind system_from_name(const std::string& name) {
  if (name == "mackey_glass") return SystemKind::kMackeyGlass;
  if (name == "vdp") return SystemKind::kVdp;
  throw UsageError("unknown system '" + name + "'");
}

Trajectory downsample_and_noise(const std::vector<double>& phi_fine,
                                const std::vector<double>& u_fine,
                                std::size_t stride, double sigma_eps,
                                RngStream& noise_rng) {
  if (stride < 1) throw UsageError("downsample_and_noise: stride must be >= 1");
  if (sigma_eps < 0.0)
    throw UsageError("downsample_and_noise: sigma_eps must be >= 0");
  if ((phi_fine.size() - 1) % stride != 0)
    throw ShapeError("downsample_and_noise: fine series length not divisible");

  const std::size_t T = (phi_fine.size() - 1) / stride;
  Trajectory tr;
  tr.phi.resize(T + 1, 1);
  tr.y.resize(T + 1, 1);
  tr.u.resize(T + 1, u_fine.empty() ? 0 : 1);
  for (std::size_t t = 0; t <= T; ++t) {
    const double phi = phi_fine[t * stride];
    tr.phi(t, 0) = phi;
    tr.y(t, 0) = phi + sigma_eps * noise_rng.normal();
    if (!u_fine.empty()) tr.u(t, 0) = u_fine[t * stride];
  }
  return tr;
}

namespace {

void minmax_over_train(const Dataset& ds, bool use_u, std::size_t dim,
                       double* mn, double* mx) {
  *mn = std::numeric_limits<double>::infinity();
  *mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ds.train_count; ++k) {
    const nn::Mat& m = use_u ? ds.trajectories[k].u : ds.trajectories[k].y;
    for (std::size_t t = 0; t < m.rows; ++t) {
      const double v = m(t, dim);
      if (v < *mn) *mn = v;
      if (v > *mx) *mx = v;
    }
  }
}

void rescale_col(nn::Mat& m, std::size_t dim, double mn, double mx) {
  const double span = mx - mn;
  for (std::size_t t = 0; t < m.rows; ++t)
    m(t, dim) = (m(t, dim) - mn) / span - 0.5;
}

}  // namespace

void normalize_dataset(Dataset& ds) {
  if (ds.normalized) throw UsageError("normalize_dataset: already normalized");
  if (ds.train_count == 0 || ds.train_count + ds.val_count != ds.K())
    throw UsageError("normalize_dataset: bad train/val split");

  const std::size_t d = ds.d();
  const std::size_t n_u = ds.n_u();
  ds.norm.y_min.assign(d, 0.0);
  ds.norm.y_max.assign(d, 0.0);
  ds.norm.u_min.assign(n_u, 0.0);
  ds.norm.u_max.assign(n_u, 0.0);

  for (std::size_t i = 0; i < d; ++i) {
    double mn, mx;
    minmax_over_train(ds, false, i, &mn, &mx);
    if (!(mx > mn))
      throw DegenerateDimension("observation dimension " + std::to_string(i) +
                                " has max == min over the training split");
    ds.norm.y_min[i] = mn;
    ds.norm.y_max[i] = mx;
  }
  for (std::size_t i = 0; i < n_u; ++i) {
    double mn, mx;
    minmax_over_train(ds, true, i, &mn, &mx);
    if (!(mx > mn))
      throw DegenerateDimension("forcing dimension " + std::to_string(i) +
                                " has max == min over the training split");
    ds.norm.u_min[i] = mn;
    ds.norm.u_max[i] = mx;
  }

  for (Trajectory& tr : ds.trajectories) {
    for (std::size_t i = 0; i < d; ++i) {
      rescale_col(tr.y, i, ds.norm.y_min[i], ds.norm.y_max[i]);
      rescale_col(tr.phi, i, ds.norm.y_min[i], ds.norm.y_max[i]);
    }
    for (std::size_t i = 0; i < n_u; ++i)
      rescale_col(tr.u, i, ds.norm.u_min[i], ds.norm.u_max[i]);
  }
  ds.normalized = true;
}

double denormalize(double v_star, double v_min, double v_max) {
  return (v_star + 0.5) * (v_max - v_min) + v_min;
}

Dataset generate_mg_dataset(const MgDatasetConfig& cfg) {
  if (cfg.train_count + cfg.val_count != cfg.K)
    throw UsageError("generate_mg_dataset: train_count + val_count != K");
  Dataset ds;
  ds.system = SystemKind::kMackeyGlass;
  ds.seed = cfg.seed;
  ds.sigma_eps = cfg.sigma_eps;
  ds.dt_fine = cfg.dt;
  ds.stride = cfg.stride;
  ds.train_count = cfg.train_count;
  ds.val_count = cfg.val_count;
  ds.trajectories.reserve(cfg.K);

  const auto burn_steps =
      static_cast<std::size_t>(std::llround(cfg.burn_in_time / cfg.dt));
  const std::size_t n_fine = cfg.T * cfg.stride;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    RngStream param_rng = make_stream(cfg.seed, RngDomain::kParams, k);
    RngStream noise_rng = make_stream(cfg.seed, RngDomain::kNoise, k);
    const MgParams p = sample_mg_params(param_rng);
    const double h0 = cfg.history_value;
    const auto phi = integrate_mackey_glass(
        p, cfg.dt, n_fine, [h0](double) { return h0; }, burn_steps);
    Trajectory tr =
        downsample_and_noise(phi, {}, cfg.stride, cfg.sigma_eps, noise_rng);
    tr.params = p;
    tr.dt_sample = cfg.dt * static_cast<double>(cfg.stride);
    ds.trajectories.push_back(std::move(tr));
  }
  normalize_dataset(ds);
  return ds;
}

Dataset generate_vdp_dataset(const VdpDatasetConfig& cfg) {
  if (cfg.train_count + cfg.val_count != cfg.K)
    throw UsageError("generate_vdp_dataset: train_count + val_count != K");
  Dataset ds;
  ds.system = SystemKind::kVdp;
  ds.seed = cfg.seed;
  ds.sigma_eps = cfg.sigma_eps;
  ds.dt_fine = cfg.dt;
  ds.stride = cfg.stride;
  ds.train_count = cfg.train_count;
  ds.val_count = cfg.val_count;
  ds.trajectories.reserve(cfg.K);

  const auto burn_steps =
      static_cast<std::size_t>(std::llround(cfg.burn_in_time / cfg.dt));
  const std::size_t n_fine = cfg.T * cfg.stride;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    RngStream param_rng = make_stream(cfg.seed, RngDomain::kParams, k);
    RngStream forcing_rng = make_stream(cfg.seed, RngDomain::kForcing, k);
    RngStream noise_rng = make_stream(cfg.seed, RngDomain::kNoise, k);
    const VdpParams p = sample_vdp_params(param_rng);
    const VdpPath path = integrate_vdp_ou(p, cfg.dt, n_fine, burn_steps,
                                          cfg.phi0, cfg.dphi0, forcing_rng);
    Trajectory tr = downsample_and_noise(path.phi, path.u, cfg.stride,
                                         cfg.sigma_eps, noise_rng);
    tr.params = p;
    tr.dt_sample = cfg.dt * static_cast<double>(cfg.stride);
    ds.trajectories.push_back(std::move(tr));
  }
  normalize_dataset(ds);
  return ds;
}

}  // namespace vidyn::dyngen
