#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "vidyn/common/error.hpp"
#include "vidyn/common/rng.hpp"
#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/dyngen/systems.hpp"

using namespace vidyn;
using dyngen::MgParams;
using dyngen::VdpParams;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

double lag1_autocorr(const std::vector<double>& v) {
  double mu = mean_of(v);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    num += (v[i] - mu) * (v[i + 1] - mu);
  for (double x : v) den += (x - mu) * (x - mu);
  return num / den;
}

}  // namespace

TEST_CASE("delay system with zero feedback follows pure exponential decay") {
  MgParams p{0.0, 0.07, 20.0};
  auto hist = [](double) { return 1.0; };
  double dt = 0.01;
  std::size_t n = 1000;  // t in [0, 10]
  auto phi = dyngen::integrate_mackey_glass(p, dt, n, hist);
  REQUIRE(phi.size() == n + 1);
  CHECK(phi[0] == 1.0);
  CHECK(std::abs(phi[n] - std::exp(-0.7)) < 1e-5);
  for (std::size_t k = 0; k <= n; ++k) {
    double exact = std::exp(-0.07 * static_cast<double>(k) * dt);
    CHECK(std::abs(phi[k] - exact) < 1e-5);
  }
}

TEST_CASE("constant history at the delay-feedback equilibrium stays put") {
  // 0 = a f* / (1 + f*^10) - g f*  =>  f* = (a/g - 1)^(1/10)
  MgParams p{0.3, 0.08, 20.0};
  double fstar = std::pow(p.alpha / p.gamma - 1.0, 0.1);
  auto hist = [fstar](double) { return fstar; };
  auto phi = dyngen::integrate_mackey_glass(p, 0.01, 100, hist);
  for (double v : phi) CHECK(std::abs(v - fstar) < 1e-6);
}

TEST_CASE("step halving on the decay case shows third-order convergence") {
  MgParams p{0.0, 0.7, 20.0};
  auto hist = [](double) { return 1.0; };
  double t_end = 10.0;
  std::vector<double> dts = {0.02, 0.01, 0.005};
  std::vector<double> errs;
  for (double dt : dts) {
    std::size_t n = static_cast<std::size_t>(std::llround(t_end / dt));
    auto phi = dyngen::integrate_mackey_glass(p, dt, n, hist);
    double e = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      double exact = std::exp(-p.gamma * static_cast<double>(k) * dt);
      e = std::max(e, std::abs(phi[k] - exact));
    }
    errs.push_back(e);
  }
  double r12 = errs[0] / errs[1];
  double r23 = errs[1] / errs[2];
  CHECK(r23 > 6.0);
  CHECK(r23 < 10.0);
  CHECK(std::log2(r12) >= 2.7);
  CHECK(std::log2(r23) >= 2.7);
}

TEST_CASE("delay integrator accepts explicit parameter overrides") {
  MgParams p{0.350, 0.070, 33.72};
  auto hist = [](double) { return 1.2; };
  auto phi = dyngen::integrate_mackey_glass(p, 0.01, 2000, hist, 500);
  REQUIRE(phi.size() == 2001);
  for (double v : phi) {
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
  }
}

TEST_CASE("unstable step size raises a diverged error with the step index") {
  MgParams p{0.0, 50.0, 2.0};
  auto hist = [](double) { return 1.0; };
  try {
    dyngen::integrate_mackey_glass(p, 1.0, 100, hist);
    FAIL("expected IntegrationDiverged");
  } catch (const IntegrationDiverged& e) {
    CHECK(e.step > 0);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("delay parameter priors cover their ranges with the right mean") {
  auto rng = make_stream(123, RngDomain::kParams, 0);
  double sum_alpha = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    MgParams p = dyngen::sample_mg_params(rng);
    CHECK(p.alpha >= 0.2);
    CHECK(p.alpha <= 0.4);
    CHECK(p.gamma >= 0.05);
    CHECK(p.gamma <= 0.1);
    CHECK(p.tau >= 20.0);
    CHECK(p.tau <= 40.0);
    sum_alpha += p.alpha;
  }
  CHECK(std::abs(sum_alpha / n - 0.3) < 0.005);
}

TEST_CASE("oscillator parameter priors cover their ranges") {
  auto rng = make_stream(123, RngDomain::kParams, 1);
  for (int i = 0; i < 10000; ++i) {
    VdpParams p = dyngen::sample_vdp_params(rng);
    CHECK(p.gamma >= 1.0);
    CHECK(p.gamma <= 4.0);
    CHECK(p.alpha >= 0.25);
    CHECK(p.alpha <= 1.0);
    CHECK(p.theta >= 0.25);
    CHECK(p.theta <= 1.0);
    CHECK(p.u_ref == 1.0);
  }
}

TEST_CASE("undamped unforced oscillator conserves energy over ten periods") {
  VdpParams p{0.0, 0.0, 1.0, 1.0};
  double dt = 0.001;
  auto n = static_cast<std::size_t>(std::llround(10.0 * 2.0 * M_PI / dt));
  auto rng = make_stream(7, RngDomain::kForcing, 0);
  auto path = dyngen::integrate_vdp_ou(p, dt, n, 0, 1.0, 0.0, rng);
  REQUIRE(path.phi.size() == n + 1);
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 <= n; ++k) {
    double w = (path.phi[k + 1] - path.phi[k - 1]) / (2.0 * dt);
    double energy = path.phi[k] * path.phi[k] + w * w;
    worst = std::max(worst, std::abs(energy - 1.0));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("forcing process has the stationary variance of its law") {
  VdpParams p{1.0, 0.0, 0.5, 1.0};
  auto rng = make_stream(11, RngDomain::kForcing, 0);
  auto path = dyngen::integrate_vdp_ou(p, 0.1, 1000000, 0, 0.1, 0.0, rng);
  double var = variance_of(path.u);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("fast-reverting forcing matches the exact one-step autocorrelation") {
  VdpParams p{1.0, 0.0, 100.0, 1.0};
  double dt = 0.001;
  auto rng = make_stream(13, RngDomain::kForcing, 0);
  auto path = dyngen::integrate_vdp_ou(p, dt, 200000, 0, 0.1, 0.0, rng);
  double rho = lag1_autocorr(path.u);
  CHECK(std::abs(rho - std::exp(-p.theta * dt)) < 0.02);
}

TEST_CASE("zero observation noise leaves y identical to the ground truth") {
  std::vector<double> phi(501);
  for (std::size_t k = 0; k < phi.size(); ++k)
    phi[k] = std::sin(0.01 * static_cast<double>(k));
  auto rng = make_stream(3, RngDomain::kNoise, 0);
  auto traj = dyngen::downsample_and_noise(phi, {}, 5, 0.0, rng);
  REQUIRE(traj.y.rows == 101);
  REQUIRE(traj.y.cols == 1);
  REQUIRE(traj.u.cols == 0);
  for (std::size_t t = 0; t < traj.y.rows; ++t) {
    CHECK(traj.y(t, 0) == phi[t * 5]);
    CHECK(traj.phi(t, 0) == phi[t * 5]);
  }
}

TEST_CASE("observation noise is white: lag-1 autocorrelation near zero") {
  std::vector<double> phi(20001, 0.5);
  auto rng = make_stream(17, RngDomain::kNoise, 0);
  auto traj = dyngen::downsample_and_noise(phi, {}, 2, 0.03, rng);
  std::vector<double> resid(traj.y.rows);
  for (std::size_t t = 0; t < traj.y.rows; ++t)
    resid[t] = traj.y(t, 0) - traj.phi(t, 0);
  double n = static_cast<double>(resid.size());
  CHECK(std::abs(lag1_autocorr(resid)) < 3.0 / std::sqrt(n));
  CHECK(std::abs(std::sqrt(variance_of(resid)) - 0.03) < 0.002);
}

TEST_CASE("forcing passes through downsampling without noise") {
  std::vector<double> phi(101), u(101);
  for (std::size_t k = 0; k <= 100; ++k) {
    phi[k] = static_cast<double>(k);
    u[k] = 2.0 * static_cast<double>(k);
  }
  auto rng = make_stream(5, RngDomain::kNoise, 0);
  auto traj = dyngen::downsample_and_noise(phi, u, 10, 0.1, rng);
  REQUIRE(traj.u.rows == 11);
  REQUIRE(traj.u.cols == 1);
  for (std::size_t t = 0; t <= 10; ++t) CHECK(traj.u(t, 0) == u[t * 10]);
}

namespace {

dyngen::Dataset tiny_dataset() {
  dyngen::Dataset ds;
  ds.system = dyngen::SystemKind::kMackeyGlass;
  ds.train_count = 2;
  ds.val_count = 1;
  ds.sigma_eps = 0.0;
  ds.dt_fine = 0.01;
  ds.stride = 1;
  for (int k = 0; k < 3; ++k) {
    dyngen::Trajectory tr;
    tr.y.resize(5, 1);
    tr.phi.resize(5, 1);
    tr.u.resize(5, 0);
    for (std::size_t t = 0; t < 5; ++t) {
      double v = 0.3 * static_cast<double>(t) + 0.1 * k;
      tr.y(t, 0) = v;
      tr.phi(t, 0) = v;
    }
    tr.params = MgParams{0.3, 0.07, 25.0};
    tr.dt_sample = 0.01;
    ds.trajectories.push_back(std::move(tr));
  }
  return ds;
}

}  // namespace

TEST_CASE("normalization maps training extremes to the unit box edges") {
  auto ds = tiny_dataset();
  dyngen::normalize_dataset(ds);
  CHECK(ds.normalized);
  // Train split spans [0.0, 1.3]: row 0 of traj 0 and row 4 of traj 1.
  CHECK(ds.trajectories[0].y(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(ds.trajectories[1].y(4, 0) == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t k = 0; k < ds.train_count; ++k)
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(ds.trajectories[k].y(t, 0) >= -0.5);
      CHECK(ds.trajectories[k].y(t, 0) <= 0.5);
    }
}

TEST_CASE("denormalizing recovers raw values to near machine precision") {
  auto ds = tiny_dataset();
  auto raw = ds;
  dyngen::normalize_dataset(ds);
  for (std::size_t k = 0; k < ds.K(); ++k)
    for (std::size_t t = 0; t < 5; ++t) {
      double back = dyngen::denormalize(ds.trajectories[k].y(t, 0),
                                        ds.norm.y_min[0], ds.norm.y_max[0]);
      double orig = raw.trajectories[k].y(t, 0);
      CHECK(std::abs(back - orig) <= 1e-12 * std::max(1.0, std::abs(orig)));
    }
}

TEST_CASE("a constant dimension on the training split is rejected") {
  auto ds = tiny_dataset();
  for (std::size_t k = 0; k < ds.K(); ++k)
    for (std::size_t t = 0; t < 5; ++t) ds.trajectories[k].y(t, 0) = 0.7;
  CHECK_THROWS_AS(dyngen::normalize_dataset(ds), DegenerateDimension);
}

TEST_CASE("small delay-system dataset has the advertised shape") {
  dyngen::MgDatasetConfig cfg;
  cfg.K = 6;
  cfg.T = 50;
  cfg.burn_in_time = 5.0;
  cfg.train_count = 4;
  cfg.val_count = 2;
  cfg.seed = 42;
  auto ds = dyngen::generate_mg_dataset(cfg);
  CHECK(ds.K() == 6);
  CHECK(ds.T() == 50);
  CHECK(ds.d() == 1);
  CHECK(ds.n_u() == 0);
  CHECK(ds.normalized);
  CHECK(ds.sigma_eps == cfg.sigma_eps);
  double y_lo = 1e9, y_hi = -1e9;
  for (std::size_t k = 0; k < ds.train_count; ++k)
    for (std::size_t t = 0; t <= 50; ++t) {
      double v = ds.trajectories[k].y(t, 0);
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  CHECK(y_lo == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(y_hi == doctest::Approx(0.5).epsilon(1e-12));
  for (const auto& tr : ds.trajectories) {
    const auto& p = std::get<MgParams>(tr.params);
    CHECK(p.alpha >= 0.2);
    CHECK(p.alpha <= 0.4);
    CHECK(tr.dt_sample == doctest::Approx(1.0));
  }
}

TEST_CASE("small oscillator dataset carries its forcing channel") {
  dyngen::VdpDatasetConfig cfg;
  cfg.K = 4;
  cfg.T = 40;
  cfg.burn_in_time = 5.0;
  cfg.train_count = 3;
  cfg.val_count = 1;
  cfg.seed = 42;
  auto ds = dyngen::generate_vdp_dataset(cfg);
  CHECK(ds.K() == 4);
  CHECK(ds.T() == 40);
  CHECK(ds.d() == 1);
  CHECK(ds.n_u() == 1);
  for (const auto& tr : ds.trajectories) {
    const auto& p = std::get<VdpParams>(tr.params);
    CHECK(p.gamma >= 1.0);
    CHECK(p.gamma <= 4.0);
    CHECK(tr.dt_sample == doctest::Approx(0.2));
    for (std::size_t t = 0; t <= 40; ++t) {
      CHECK(std::isfinite(tr.y(t, 0)));
      CHECK(std::isfinite(tr.u(t, 0)));
    }
  }
}

TEST_CASE("regenerating with the same seed is bit-identical") {
  dyngen::MgDatasetConfig cfg;
  cfg.K = 3;
  cfg.T = 30;
  cfg.burn_in_time = 2.0;
  cfg.train_count = 2;
  cfg.val_count = 1;
  cfg.seed = 99;
  auto a = dyngen::generate_mg_dataset(cfg);
  auto b = dyngen::generate_mg_dataset(cfg);
  REQUIRE(a.K() == b.K());
  for (std::size_t k = 0; k < a.K(); ++k) {
    const auto& ta = a.trajectories[k];
    const auto& tb = b.trajectories[k];
    CHECK(std::memcmp(ta.y.data(), tb.y.data(),
                      ta.y.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(ta.phi.data(), tb.phi.data(),
                      ta.phi.size() * sizeof(double)) == 0);
  }
  CHECK(a.norm.y_min[0] == b.norm.y_min[0]);
  CHECK(a.norm.y_max[0] == b.norm.y_max[0]);
}

TEST_CASE("different seeds give different observations") {
  dyngen::MgDatasetConfig cfg;
  cfg.K = 2;
  cfg.T = 20;
  cfg.burn_in_time = 2.0;
  cfg.train_count = 1;
  cfg.val_count = 1;
  cfg.seed = 1;
  auto a = dyngen::generate_mg_dataset(cfg);
  cfg.seed = 2;
  auto b = dyngen::generate_mg_dataset(cfg);
  CHECK(std::memcmp(a.trajectories[0].y.data(), b.trajectories[0].y.data(),
                    a.trajectories[0].y.size() * sizeof(double)) != 0);
}
