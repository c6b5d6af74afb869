#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "vidyn/common/error.hpp"
#include "vidyn/common/rng.hpp"
#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/vi/model.hpp"
#include "vidyn/vi/train.hpp"

using namespace vidyn;
using nn::Mat;
using nn::Vec;

namespace {

// Synthetic forced trajectory with smooth, bounded signals; T+1 rows.
dyngen::Trajectory toy_trajectory(std::size_t rows) {
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

dyngen::Dataset tiny_mg_dataset() {
  dyngen::MgDatasetConfig cfg;
  cfg.K = 6;
  cfg.T = 50;
  cfg.burn_in_time = 5.0;
  cfg.train_count = 4;
  cfg.val_count = 2;
  cfg.seed = 42;
  return dyngen::generate_mg_dataset(cfg);
}

std::vector<double> flatten(const std::vector<nn::ParamView>& views) {
  std::vector<double> flat;
  for (const auto& v : views) flat.insert(flat.end(), v.data, v.data + v.size);
  return flat;
}

double total_loss(const vi::ViModel& model, const dyngen::Trajectory& tr,
                  vi::Window w, const vi::TrainConfig& cfg, const Mat& eps,
                  vi::ViScratch& s) {
  const auto st = vi_window_pass(model, tr, w, cfg, eps, nullptr, s);
  return cfg.lambda * st.l_q + st.l_y;
}

}  // namespace

TEST_CASE("divergence term closed form on directed instances") {
  vi::PosteriorGaussian q;
  q.m_q = {0.0};
  q.sigma_q = {1.0};
  q.log_sigma_q = {0.0};
  CHECK(vi::kl_gaussian(q, 1.0) == doctest::Approx(0.0).epsilon(1e-15));

  q.m_q = {1.0};
  CHECK(vi::kl_gaussian(q, 1.0) == doctest::Approx(0.5).epsilon(1e-15));

  // Scale invariance: (m, sigma, sigma_z) and (cm, c sigma, c sigma_z) match.
  vi::PosteriorGaussian qa, qb;
  qa.m_q = {0.4, -0.7};
  qa.sigma_q = {0.6, 1.3};
  qa.log_sigma_q = {std::log(0.6), std::log(1.3)};
  const double c = 2.5;
  qb.m_q = {0.4 * c, -0.7 * c};
  qb.sigma_q = {0.6 * c, 1.3 * c};
  qb.log_sigma_q = {std::log(0.6 * c), std::log(1.3 * c)};
  CHECK(vi::kl_gaussian(qa, 1.0) ==
        doctest::Approx(vi::kl_gaussian(qb, c)).epsilon(1e-12));
}

TEST_CASE("divergence term matches a Monte Carlo estimate") {
  auto rng = make_stream(7, RngDomain::kTest, 0);
  for (int rep = 0; rep < 6; ++rep) {
    const std::size_t n_z = 1 + rng.index(4);
    vi::PosteriorGaussian q;
    q.m_q.resize(n_z);
    q.sigma_q.resize(n_z);
    q.log_sigma_q.resize(n_z);
    for (std::size_t i = 0; i < n_z; ++i) {
      q.m_q[i] = rng.uniform(-1.5, 1.5);
      q.log_sigma_q[i] = rng.uniform(-1.5, 0.8);
      q.sigma_q[i] = std::exp(q.log_sigma_q[i]);
    }
    const double sigma_z = rng.uniform(0.5, 2.0);
    const double exact = vi::kl_gaussian(q, sigma_z);

    const std::size_t n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double diff = 0.0;
      for (std::size_t i = 0; i < n_z; ++i) {
        const double e = rng.normal();
        const double z = q.m_q[i] + q.sigma_q[i] * e;
        diff += -0.5 * e * e - q.log_sigma_q[i] +
                0.5 * (z / sigma_z) * (z / sigma_z) + std::log(sigma_z);
      }
      sum += diff;
      sum_sq += diff * diff;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double se = std::sqrt(var / n);
    INFO("rep ", rep, " exact ", exact, " mc ", mean, " se ", se);
    CHECK(std::abs(mean - exact) < 3.0 * se + 1e-12);
  }
}

TEST_CASE("reparameterised draws have the posterior's moments") {
  vi::PosteriorGaussian q;
  q.m_q = {0.5, -0.2, 0.8};
  q.sigma_q = {1.0, 0.5, 0.0};
  q.log_sigma_q = {0.0, std::log(0.5), -50.0};

  auto rng = make_stream(11, RngDomain::kTest, 1);
  Mat z, eps;
  const std::size_t M = 100000;
  vi::reparam_sample(q, M, rng, z, eps);
  REQUIRE(z.rows == M);
  REQUIRE(z.cols == 3);
  REQUIRE(eps.rows == M);

  // Zero spread collapses the draw onto the mean exactly.
  for (std::size_t m = 0; m < M; ++m) CHECK(z(m, 2) == 0.8);

  // Draws reproduce m + sigma*eps bitwise.
  for (std::size_t m = 0; m < 50; ++m)
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(z(m, i) == q.m_q[i] + q.sigma_q[i] * eps(m, i));

  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      sum += z(m, i);
      sum_sq += z(m, i) * z(m, i);
    }
    const double mean = sum / M;
    const double var = sum_sq / M - mean * mean;
    const double se = q.sigma_q[i] / std::sqrt(static_cast<double>(M));
    CHECK(std::abs(mean - q.m_q[i]) < 4.0 * se);
    CHECK(var == doctest::Approx(q.sigma_q[i] * q.sigma_q[i]).epsilon(0.05));
  }
}

TEST_CASE("posterior net gradients match finite differences") {
  const std::size_t d_code = 6, n_z = 2;
  vi::PosteriorNet net(d_code, n_z);
  auto rng = make_stream(3, RngDomain::kTest, 2);
  net.init_params(rng);
  // Positive hidden biases keep every rectifier alive at this width, so the
  // probe point is generic rather than pinned to a kink.
  for (auto& layer : net.hidden)
    for (auto& b : layer.b) b = rng.uniform(0.1, 0.3);

  Vec code(d_code);
  for (auto& v : code) v = rng.uniform(-1.0, 1.0);
  Vec d_m(n_z), d_ls(n_z);
  for (auto& v : d_m) v = rng.uniform(-1.0, 1.0);
  for (auto& v : d_ls) v = rng.uniform(-1.0, 1.0);

  vi::PosteriorTape tape;
  vi::PosteriorGaussian q;
  posterior_forward(net, code, tape, q);
  // The probe must sit clear of every kink: inside the clamp's open interval
  // and away from rectifier thresholds, so the finite-difference stencil
  // never straddles a non-smooth point.
  for (std::size_t i = 0; i < n_z; ++i) {
    REQUIRE(tape.log_sigma_raw[i] > -6.9);
    REQUIRE(tape.log_sigma_raw[i] < 1.9);
  }
  for (const auto& pre : tape.pre)
    for (double v : pre) REQUIRE(std::abs(v) > 1e-4);

  auto scalar = [&](const Vec& c) {
    vi::PosteriorTape t2;
    vi::PosteriorGaussian q2;
    posterior_forward(net, c, t2, q2);
    double s = 0.0;
    for (std::size_t i = 0; i < n_z; ++i)
      s += d_m[i] * q2.m_q[i] + d_ls[i] * q2.log_sigma_q[i];
    return s;
  };

  vi::PosteriorNet grad(d_code, n_z);
  grad.zero_all();
  Vec d_code_adj(d_code, 0.0);
  posterior_backward(net, tape, d_m, d_ls, grad, &d_code_adj);

  const double h = 1e-6;
  auto params = net.params();
  auto grads = grad.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t j = 0; j < params[k].size; ++j) {
      const double saved = params[k].data[j];
      params[k].data[j] = saved + h;
      const double up = scalar(code);
      params[k].data[j] = saved - h;
      const double dn = scalar(code);
      params[k].data[j] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double g = grads[k].data[j];
      INFO(params[k].name, "[", j, "]");
      CHECK(std::abs(fd - g) < std::max(1e-4 * std::abs(g), 1e-8));
    }
  }
  for (std::size_t j = 0; j < d_code; ++j) {
    Vec c = code;
    c[j] = code[j] + h;
    const double up = scalar(c);
    c[j] = code[j] - h;
    const double dn = scalar(c);
    const double fd = (up - dn) / (2.0 * h);
    CHECK(std::abs(fd - d_code_adj[j]) <
          std::max(1e-4 * std::abs(d_code_adj[j]), 1e-8));
  }
}

TEST_CASE("spread head saturation blocks its gradient") {
  const std::size_t d_code = 4, n_z = 2;
  vi::PosteriorNet net(d_code, n_z);
  auto rng = make_stream(5, RngDomain::kTest, 3);
  net.init_params(rng);
  net.s_head.b[0] = 10.0;   // raw far above the upper bound
  net.s_head.b[1] = -20.0;  // raw far below the lower bound

  Vec code(d_code, 0.3);
  vi::PosteriorTape tape;
  vi::PosteriorGaussian q;
  posterior_forward(net, code, tape, q);
  CHECK(q.log_sigma_q[0] == 2.0);
  CHECK(q.log_sigma_q[1] == -7.0);
  CHECK(q.sigma_q[0] == doctest::Approx(std::exp(2.0)));

  vi::PosteriorNet grad(d_code, n_z);
  grad.zero_all();
  Vec d_m(n_z, 0.0), d_ls(n_z, 1.0);
  posterior_backward(net, tape, d_m, d_ls, grad, nullptr);
  CHECK(grad.s_head.b[0] == 0.0);
  CHECK(grad.s_head.b[1] == 0.0);
  for (std::size_t j = 0; j < d_code; ++j) {
    CHECK(grad.s_head.W(0, j) == 0.0);
    CHECK(grad.s_head.W(1, j) == 0.0);
  }
}

TEST_CASE("sequence score gradients match finite differences") {
  auto tr = toy_trajectory(16);
  nn::RnnModel model(2, 1, 8);
  auto rng = make_stream(9, RngDomain::kTest, 4);
  model.init_params(rng);
  vi::Window w{0, 1};
  const std::size_t T = 8;

  vi::SeqScratch s;
  nn::RnnModel grad(2, 1, 8);
  grad.zero_all();
  const double base =
      vi::sequence_nll(model, tr, w, T, nullptr, 0, 1.0, s, &grad, nullptr);
  CHECK(std::isfinite(base));

  const double h = 1e-6;
  auto params = model.params();
  auto grads = grad.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t j = 0; j < params[k].size; ++j) {
      const double saved = params[k].data[j];
      params[k].data[j] = saved + h;
      const double up =
          vi::sequence_nll(model, tr, w, T, nullptr, 0, 1.0, s, nullptr, nullptr);
      params[k].data[j] = saved - h;
      const double dn =
          vi::sequence_nll(model, tr, w, T, nullptr, 0, 1.0, s, nullptr, nullptr);
      params[k].data[j] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double g = grads[k].data[j];
      INFO(params[k].name, "[", j, "]");
      CHECK(std::abs(fd - g) < std::max(1e-4 * std::abs(g), 1e-8));
    }
  }
}

TEST_CASE("variational objective gradients match finite differences") {
  auto tr = toy_trajectory(16);
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
  vi::Window w{0, 2};

  Mat eps(4, 2);
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < 2; ++i) eps(m, i) = rng.normal();

  vi::ViScratch s;
  {
    // Guard: the probe must not sit near a clamp boundary.
    const auto st = vi_window_pass(model, tr, w, cfg, eps, nullptr, s);
    CHECK(std::isfinite(st.l_q));
    CHECK(std::isfinite(st.l_y));
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
  const auto analytic = flatten(grads.params());

  auto params = model.trainable_params();
  const double h = 1e-6;
  std::size_t flat = 0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t j = 0; j < params[k].size; ++j, ++flat) {
      const double saved = params[k].data[j];
      params[k].data[j] = saved + h;
      const double up = total_loss(model, tr, w, cfg, eps, s);
      params[k].data[j] = saved - h;
      const double dn = total_loss(model, tr, w, cfg, eps, s);
      params[k].data[j] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double g = analytic[flat];
      INFO(params[k].name, "[", j, "]");
      REQUIRE(std::abs(fd - g) < std::max(1e-4 * std::abs(g), 1e-8));
      ++checked;
    }
  }
  CHECK(checked == analytic.size());
  CHECK(checked > 1500);
}

TEST_CASE("identical latent draws collapse to the single-sample pass") {
  auto tr = toy_trajectory(16);
  vi::ViModel model(1, 1, 2, 8);
  auto rng = make_stream(33, RngDomain::kTest, 6);
  model.encoder.init_params(rng);
  model.posterior.init_params(rng);
  model.decoder.init_params(rng);

  vi::TrainConfig cfg;
  cfg.seq_len = 10;
  cfg.lambda = 1.0;
  vi::Window w{0, 0};

  Mat eps1(1, 2);
  eps1(0, 0) = 0.3;
  eps1(0, 1) = -0.7;
  Mat eps2(2, 2);
  for (std::size_t m = 0; m < 2; ++m) {
    eps2(m, 0) = 0.3;
    eps2(m, 1) = -0.7;
  }

  vi::ViScratch s1, s2;
  vi::ViGrads g1(model), g2(model);
  g1.zero_all();
  g2.zero_all();
  const auto st1 = vi_window_pass(model, tr, w, cfg, eps1, &g1, s1);
  const auto st2 = vi_window_pass(model, tr, w, cfg, eps2, &g2, s2);
  CHECK(st1.l_q == st2.l_q);
  CHECK(st1.l_y == st2.l_y);
  const auto f1 = flatten(g1.params());
  const auto f2 = flatten(g2.params());
  REQUIRE(f1.size() == f2.size());
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == f2[i]);
}

TEST_CASE("window pass is invariant to the thread count") {
  auto tr = toy_trajectory(20);
  vi::ViModel model(1, 1, 3, 8);
  auto rng = make_stream(44, RngDomain::kTest, 7);
  model.encoder.init_params(rng);
  model.posterior.init_params(rng);
  model.decoder.init_params(rng);

  Mat eps(5, 3);
  for (std::size_t m = 0; m < 5; ++m)
    for (std::size_t i = 0; i < 3; ++i) eps(m, i) = rng.normal();

  vi::TrainConfig cfg;
  cfg.seq_len = 12;
  cfg.lambda = 0.5;
  vi::Window w{0, 3};

  cfg.threads = 1;
  vi::ViScratch s1;
  vi::ViGrads g1(model);
  g1.zero_all();
  const auto st1 = vi_window_pass(model, tr, w, cfg, eps, &g1, s1);

  cfg.threads = 3;
  vi::ViScratch s3;
  vi::ViGrads g3(model);
  g3.zero_all();
  const auto st3 = vi_window_pass(model, tr, w, cfg, eps, &g3, s3);

  CHECK(st1.l_q == st3.l_q);
  CHECK(st1.l_y == st3.l_y);
  const auto f1 = flatten(g1.params());
  const auto f3 = flatten(g3.params());
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == f3[i]);
}

TEST_CASE("window pass rejects malformed inputs") {
  auto tr = toy_trajectory(12);
  vi::ViModel model(1, 1, 2, 4);
  auto rng = make_stream(55, RngDomain::kTest, 8);
  model.encoder.init_params(rng);
  model.posterior.init_params(rng);
  model.decoder.init_params(rng);

  vi::TrainConfig cfg;
  cfg.seq_len = 8;
  vi::ViScratch s;

  Mat bad_eps(3, 5);
  CHECK_THROWS_AS(
      vi_window_pass(model, tr, {0, 0}, cfg, bad_eps, nullptr, s), ShapeError);
  Mat eps(3, 2);
  CHECK_THROWS_AS(vi_window_pass(model, tr, {0, 6}, cfg, eps, nullptr, s),
                  UsageError);
  Mat empty_eps(0, 2);
  CHECK_THROWS_AS(vi_window_pass(model, tr, {0, 0}, cfg, empty_eps, nullptr, s),
                  UsageError);
}

TEST_CASE("one-step trainer restores its best validation checkpoint") {
  auto ds = tiny_mg_dataset();
  vi::TrainConfig cfg;
  cfg.seq_len = 30;
  cfg.batch = 4;
  cfg.iters = 200;
  cfg.val_every = 50;
  cfg.val_windows = 5;
  cfg.seed = 3;

  nn::RnnModel model(ds.d() + ds.n_u(), ds.d(), 8);
  const auto res = vi::train_rnn(model, ds, cfg);
  REQUIRE(res.log.size() == 4);
  CHECK(res.log.front().iter == 50);
  CHECK(res.log.back().iter == 200);
  CHECK(res.best_iteration % 50 == 0);
  for (const auto& row : res.log) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.l_q == 0.0);
    CHECK(row.l_y == row.loss);
    CHECK(row.val_loss >= res.best_val_loss);
  }
  // Training on smooth data from a random start must improve the score.
  CHECK(res.log.back().val_loss < res.log.front().val_loss);

  // Recompute the validation score of the restored parameters over the same
  // fixed windows; it must equal the reported best exactly.
  auto vw_rng = make_stream(cfg.seed, RngDomain::kValWindows, 0);
  const std::size_t starts = ds.T() - cfg.seq_len + 1;
  double val = 0.0;
  vi::SeqScratch s;
  for (std::size_t j = 0; j < cfg.val_windows; ++j) {
    vi::Window w;
    w.traj = ds.train_count + vw_rng.index(ds.val_count);
    w.start = vw_rng.index(starts);
    val += vi::sequence_nll(model, ds.trajectories[w.traj], w, cfg.seq_len,
                            nullptr, 0, 1.0, s, nullptr, nullptr);
  }
  val /= static_cast<double>(cfg.val_windows);
  CHECK(val == res.best_val_loss);
}

TEST_CASE("one-step trainer fails loudly when the loss blows up") {
  auto ds = tiny_mg_dataset();
  vi::TrainConfig cfg;
  cfg.seq_len = 20;
  cfg.batch = 2;
  cfg.iters = 50;
  cfg.val_every = 50;
  cfg.lr_max = 1e200;
  cfg.lr_min = 1e200;
  cfg.adam.clip = 0.0;
  nn::RnnModel model(ds.d(), ds.d(), 6);
  try {
    vi::train_rnn(model, ds, cfg);
    FAIL("expected a training failure");
  } catch (const TrainingFailure& e) {
    CHECK(e.iteration >= 1);
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("variational trainer leaves the encoder untouched") {
  auto ds = tiny_mg_dataset();
  vi::ViModel model(ds.d(), ds.n_u(), 2, 8);
  auto enc_rng = make_stream(17, RngDomain::kTest, 9);
  model.encoder.init_params(enc_rng);
  const auto enc_before = flatten(model.encoder.params());

  vi::TrainConfig cfg;
  cfg.seq_len = 20;
  cfg.batch = 2;
  cfg.M = 3;
  cfg.iters = 5;
  cfg.val_every = 5;
  cfg.val_windows = 2;
  cfg.seed = 13;
  const auto res = vi::train_vi(model, ds, cfg);
  CHECK(res.log.size() == 1);
  CHECK(std::isfinite(res.best_val_loss));

  const auto enc_after = flatten(model.encoder.params());
  REQUIRE(enc_before.size() == enc_after.size());
  for (std::size_t i = 0; i < enc_before.size(); ++i)
    CHECK(enc_before[i] == enc_after[i]);
}

TEST_CASE("variational trainer is reproducible for a fixed seed") {
  auto ds = tiny_mg_dataset();
  vi::TrainConfig cfg;
  cfg.seq_len = 20;
  cfg.batch = 2;
  cfg.M = 3;
  cfg.iters = 8;
  cfg.val_every = 4;
  cfg.val_windows = 2;
  cfg.seed = 29;

  auto run = [&](std::uint64_t seed) {
    vi::TrainConfig c = cfg;
    c.seed = seed;
    vi::ViModel model(ds.d(), ds.n_u(), 2, 8);
    auto enc_rng = make_stream(17, RngDomain::kTest, 10);
    model.encoder.init_params(enc_rng);
    const auto res = vi::train_vi(model, ds, c);
    return std::make_pair(flatten(model.trainable_params()), res);
  };

  const auto [p1, r1] = run(29);
  const auto [p2, r2] = run(29);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].loss == r2.log[i].loss);
    CHECK(r1.log[i].val_loss == r2.log[i].val_loss);
  }

  const auto [p3, r3] = run(30);
  bool any_diff = false;
  for (std::size_t i = 0; i < p1.size(); ++i)
    if (p1[i] != p3[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("trainer configuration is validated") {
  auto ds = tiny_mg_dataset();
  nn::RnnModel model(ds.d() + ds.n_u(), ds.d(), 4);
  vi::TrainConfig cfg;
  cfg.seq_len = ds.T() + 1;
  CHECK_THROWS_AS(vi::train_rnn(model, ds, cfg), UsageError);
  cfg.seq_len = 10;
  cfg.batch = 0;
  CHECK_THROWS_AS(vi::train_rnn(model, ds, cfg), UsageError);
  cfg.batch = 2;
  cfg.M = 0;
  vi::ViModel vm(ds.d(), ds.n_u(), 2, 4);
  CHECK_THROWS_AS(vi::train_vi(vm, ds, cfg), UsageError);
}
