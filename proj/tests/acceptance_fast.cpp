#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "vidyn/common/rng.hpp"
#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/dyngen/systems.hpp"
#include "vidyn/sim/forecast.hpp"
#include "vidyn/vi/model.hpp"
#include "vidyn/vi/train.hpp"

using namespace vidyn;
using nn::Mat;
using nn::Vec;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void report(int criterion, const char* name, bool pass, const char* detail,
            double secs) {
  std::printf("criterion %d (%s): %s (%s, %.1f s)\n", criterion, name,
              pass ? "PASS" : "FAIL", detail, secs);
  std::fflush(stdout);
}

dyngen::Trajectory forced_trajectory(std::size_t rows) {
  dyngen::Trajectory tr;
  tr.y.resize(rows, 1);
  tr.u.resize(rows, 1);
  tr.phi.resize(rows, 1);
  for (std::size_t t = 0; t < rows; ++t) {
    tr.y(t, 0) = 0.3 * std::sin(0.4 * static_cast<double>(t));
    tr.u(t, 0) = 0.2 * std::cos(0.3 * static_cast<double>(t));
    tr.phi(t, 0) = tr.y(t, 0);
  }
  tr.dt_sample = 1.0;
  return tr;
}

// Linear-Gaussian generator y' = a y + sigma eps with constant spread.
class Ar1Stepper final : public sim::Stepper {
 public:
  Ar1Stepper(double a, double sigma) : a_(a), log_sigma_(std::log(sigma)) {}
  std::size_t x_dim() const override { return 1; }
  std::size_t y_dim() const override { return 1; }
  void reset() override {}
  void step(const double* x, double* mu, double* log_sigma) override {
    mu[0] = a_ * x[0];
    log_sigma[0] = log_sigma_;
  }

 private:
  double a_, log_sigma_;
};

}  // namespace

TEST_CASE("criterion 1: analytic gradients of the variational objective") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto tr = forced_trajectory(16);
  vi::ViModel model(1, 1, 2, 8);
  auto rng = make_stream(21, RngDomain::kTest, 5);
  model.encoder.init_params(rng);
  model.posterior.init_params(rng);
  model.decoder.init_params(rng);

  vi::TrainConfig cfg;
  cfg.seq_len = 10;
  cfg.lambda = 0.7;
  cfg.sigma_z = 1.3;
  cfg.threads = 1;
  const vi::Window w{0, 2};

  Mat eps(4, 2);
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < 2; ++i) eps(m, i) = rng.normal();

  vi::ViScratch s;
  {
    const auto st = vi_window_pass(model, tr, w, cfg, eps, nullptr, s);
    REQUIRE(std::isfinite(st.l_q));
    REQUIRE(std::isfinite(st.l_y));
    for (std::size_t i = 0; i < 2; ++i) {
      REQUIRE(s.post_tape.log_sigma_raw[i] > -6.9);
      REQUIRE(s.post_tape.log_sigma_raw[i] < 1.9);
    }
    for (const auto& pre : s.post_tape.pre)
      for (double v : pre) REQUIRE(std::abs(v) > 1e-4);
  }

  vi::ViGrads grads(model);
  grads.zero_all();
  vi_window_pass(model, tr, w, cfg, eps, &grads, s);
  std::vector<double> analytic;
  for (const auto& v : grads.params())
    analytic.insert(analytic.end(), v.data, v.data + v.size);

  auto loss = [&] {
    const auto st = vi_window_pass(model, tr, w, cfg, eps, nullptr, s);
    return cfg.lambda * st.l_q + st.l_y;
  };

  auto params = model.trainable_params();
  const double h = 1e-6;
  std::size_t flat = 0, checked = 0, bad = 0;
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t j = 0; j < p.size; ++j, ++flat) {
      const double saved = p.data[j];
      p.data[j] = saved + h;
      const double up = loss();
      p.data[j] = saved - h;
      const double dn = loss();
      p.data[j] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double g = analytic[flat];
      const double tol = std::max(1e-4 * std::abs(g), 1e-8);
      const double dev = std::abs(fd - g);
      worst = std::max(worst, dev / tol);
      if (dev > tol) ++bad;
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass =
      bad == 0 && checked == analytic.size() && checked > 1000 && secs < 60.0;
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "%zu gradients, %zu outside tolerance, worst at %.2f of "
                "allowance",
                checked, bad, worst);
  report(1, "gradient correctness", pass, detail, secs);
  CHECK(bad == 0);
  CHECK(checked == analytic.size());
  CHECK(checked > 1000);
  CHECK(secs < 60.0);
}

TEST_CASE("criterion 2: closed-form divergence matches Monte Carlo") {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_z = 3, n_samples = 1000000;
  std::size_t bad = 0;
  double worst_z = 0.0;
  for (std::size_t inst = 0; inst < 20; ++inst) {
    auto rng = make_stream(5, RngDomain::kTest, 100 + inst);
    vi::PosteriorGaussian q;
    q.m_q.resize(n_z);
    q.sigma_q.resize(n_z);
    q.log_sigma_q.resize(n_z);
    for (std::size_t i = 0; i < n_z; ++i) {
      q.m_q[i] = rng.uniform(-2.0, 2.0);
      q.log_sigma_q[i] = rng.uniform(-1.2, 0.6);
      q.sigma_q[i] = std::exp(q.log_sigma_q[i]);
    }
    const double sigma_z = rng.uniform(0.7, 1.6);
    const double closed = vi::kl_gaussian(q, sigma_z);

    // Pathwise estimate of E_q[log q(z) - log p(z)].
    double sum = 0.0, sum_sq = 0.0;
    const double log_sz = std::log(sigma_z);
    for (std::size_t s = 0; s < n_samples; ++s) {
      double t = 0.0;
      for (std::size_t i = 0; i < n_z; ++i) {
        const double e = rng.normal();
        const double z = q.m_q[i] + q.sigma_q[i] * e;
        t += -q.log_sigma_q[i] - 0.5 * e * e + log_sz +
             0.5 * z * z / (sigma_z * sigma_z);
      }
      sum += t;
      sum_sq += t * t;
    }
    const double n = static_cast<double>(n_samples);
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    const double se = std::sqrt(var / n);
    const double zscore = std::abs(closed - mean) / se;
    worst_z = std::max(worst_z, zscore);
    if (zscore > 3.0) ++bad;
  }
  const double secs = seconds_since(t0);
  const bool pass = bad == 0 && secs < 30.0;
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "20 instances x 1e6 samples, worst |z| = %.2f", worst_z);
  report(2, "divergence closed form", pass, detail, secs);
  CHECK(bad == 0);
  CHECK(secs < 30.0);
}

TEST_CASE("criterion 3: integrator fidelity") {
  const auto t0 = std::chrono::steady_clock::now();

  // Third-order convergence on pure exponential decay.
  dyngen::MgParams decay{0.0, 0.7, 20.0};
  auto hist = [](double) { return 1.0; };
  std::vector<double> errs;
  for (const double dt : {0.01, 0.005}) {
    const auto n = static_cast<std::size_t>(std::llround(10.0 / dt));
    const auto phi = dyngen::integrate_mackey_glass(decay, dt, n, hist);
    double e = 0.0;
    for (std::size_t k = 0; k <= n; ++k)
      e = std::max(e, std::abs(phi[k] - std::exp(-decay.gamma *
                                                 static_cast<double>(k) * dt)));
    errs.push_back(e);
  }
  const double ratio = errs[0] / errs[1];
  const bool conv_ok = ratio >= 6.0 && ratio <= 10.0;

  // Stationary spread of the forcing process.
  dyngen::VdpParams ou{1.0, 0.0, 0.5, 1.0};
  auto ou_rng = make_stream(11, RngDomain::kForcing, 0);
  const auto ou_path =
      dyngen::integrate_vdp_ou(ou, 0.1, 1000000, 0, 0.1, 0.0, ou_rng);
  double mu = 0.0;
  for (const double v : ou_path.u) mu += v;
  mu /= static_cast<double>(ou_path.u.size());
  double var = 0.0;
  for (const double v : ou_path.u) var += (v - mu) * (v - mu);
  var /= static_cast<double>(ou_path.u.size());
  const bool ou_ok = std::abs(var - 1.0) < 0.02;

  // Energy conservation of the undamped unforced oscillator.
  dyngen::VdpParams osc{0.0, 0.0, 1.0, 1.0};
  const double dt = 0.001;
  const auto n =
      static_cast<std::size_t>(std::llround(10.0 * 2.0 * M_PI / dt));
  auto osc_rng = make_stream(7, RngDomain::kForcing, 0);
  const auto osc_path =
      dyngen::integrate_vdp_ou(osc, dt, n, 0, 1.0, 0.0, osc_rng);
  double drift = 0.0;
  for (std::size_t k = 1; k + 1 <= n; ++k) {
    const double w =
        (osc_path.phi[k + 1] - osc_path.phi[k - 1]) / (2.0 * dt);
    const double energy = osc_path.phi[k] * osc_path.phi[k] + w * w;
    drift = std::max(drift, std::abs(energy - 1.0));
  }
  const bool energy_ok = drift < 1e-3;

  const double secs = seconds_since(t0);
  const bool pass = conv_ok && ou_ok && energy_ok && secs < 60.0;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "halving ratio %.2f, stationary variance %.4f, energy drift "
                "%.2e",
                ratio, var, drift);
  report(3, "integrator fidelity", pass, detail, secs);
  CHECK(conv_ok);
  CHECK(ou_ok);
  CHECK(energy_ok);
  CHECK(secs < 60.0);
}

TEST_CASE("criterion 4: mixture identity and linear-Gaussian oracle") {
  const auto t0 = std::chrono::steady_clock::now();

  // Uncentered moment identity of the equal-weight mixture.
  auto rng = make_stream(23, RngDomain::kTest, 42);
  double worst_gap = 0.0;
  for (std::size_t rep = 0; rep < 200; ++rep) {
    const std::size_t M = 1 + rep % 8;
    std::vector<double> mus(M), sigmas(M);
    for (std::size_t m = 0; m < M; ++m) {
      mus[m] = rng.uniform(-2.0, 2.0);
      sigmas[m] = rng.uniform(0.1, 1.5);
    }
    const auto mm = sim::mixture_moments(mus.data(), sigmas.data(), M);
    double second = 0.0;
    for (std::size_t m = 0; m < M; ++m)
      second += mus[m] * mus[m] + sigmas[m] * sigmas[m];
    second /= static_cast<double>(M);
    worst_gap = std::max(
        worst_gap, std::abs(mm.sigma * mm.sigma + mm.mu * mm.mu - second));
    if (M == 1) {
      worst_gap = std::max(worst_gap, std::abs(mm.mu - mus[0]));
      worst_gap = std::max(worst_gap, std::abs(mm.sigma - sigmas[0]));
    }
  }
  const bool identity_ok = worst_gap <= 1e-12;

  // Closed-loop ensemble against the exact linear-Gaussian law.
  const double a = 0.8, sigma = 0.3, y0 = 1.0;
  const std::size_t n_s = 4000, horizon = 12;
  Ar1Stepper st(a, sigma);
  Mat y_hist(1, 1);
  y_hist(0, 0) = y0;
  const Mat u_full(1 + horizon, 0);
  const Mat z_empty(n_s, 0);
  const auto ens =
      sim::rollout(st, y_hist, u_full, z_empty, horizon, 7, 0);
  REQUIRE(ens.complete);
  double worst_mean_z = 0.0, worst_var_z = 0.0;
  for (std::size_t f = 0; f < horizon; ++f) {
    double m = 0.0;
    for (std::size_t j = 0; j < n_s; ++j) m += ens.samples[j](f, 0);
    m /= static_cast<double>(n_s);
    double v = 0.0;
    for (std::size_t j = 0; j < n_s; ++j) {
      const double d = ens.samples[j](f, 0) - m;
      v += d * d;
    }
    v /= static_cast<double>(n_s - 1);
    const double p = static_cast<double>(f + 1);
    const double mean_exact = std::pow(a, p) * y0;
    const double var_exact =
        sigma * sigma * (1.0 - std::pow(a * a, p)) / (1.0 - a * a);
    const double se_mean = std::sqrt(var_exact / static_cast<double>(n_s));
    const double se_var =
        var_exact * std::sqrt(2.0 / static_cast<double>(n_s - 1));
    worst_mean_z = std::max(worst_mean_z, std::abs(m - mean_exact) / se_mean);
    worst_var_z = std::max(worst_var_z, std::abs(v - var_exact) / se_var);
  }
  const bool oracle_ok = worst_mean_z < 3.0 && worst_var_z < 3.0;

  const double secs = seconds_since(t0);
  const bool pass = identity_ok && oracle_ok && secs < 60.0;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "identity gap %.2e, ensemble |z| mean %.2f / variance %.2f",
                worst_gap, worst_mean_z, worst_var_z);
  report(4, "mixture identity and ensemble oracle", pass, detail, secs);
  CHECK(identity_ok);
  CHECK(oracle_ok);
  CHECK(secs < 60.0);
}
