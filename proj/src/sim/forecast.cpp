#include "vidyn/sim/forecast.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "vidyn/common/error.hpp"
#include "vidyn/common/rng.hpp"
#include "vidyn/nn/layers.hpp"

namespace vidyn::sim {

namespace {

constexpr double kGuard = 1e6;

std::size_t forcing_cols(const dyngen::Trajectory& tr) {
  return tr.u.rows > 0 ? tr.u.cols : 0;
}

nn::Mat copy_rows(const nn::Mat& src, std::size_t start, std::size_t count) {
  if (start + count > src.rows)
    throw UsageError("row slice [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") exceeds " +
                     std::to_string(src.rows) + " rows");
  nn::Mat out(count, src.cols);
  if (src.cols > 0)
    std::memcpy(out.data(), src.row(start), sizeof(double) * count * src.cols);
  return out;
}

// Equal-weight mixture CDF; a zero-spread component contributes a step.
double mixture_cdf(const double* mus, const double* sigmas, std::size_t M,
                   double x) {
  double s = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    if (sigmas[m] > 0.0) {
      s += 0.5 * std::erfc(-(x - mus[m]) / (sigmas[m] * std::sqrt(2.0)));
    } else {
      s += x < mus[m] ? 0.0 : (x > mus[m] ? 1.0 : 0.5);
    }
  }
  return s / static_cast<double>(M);
}

}  // namespace

void spin_up(Stepper& st, const nn::Mat& xs) {
  if (xs.rows == 0) throw UsageError("spin_up: no history rows");
  if (xs.cols != st.x_dim())
    throw ShapeError("spin_up: input width " + std::to_string(xs.cols) +
                     " != stepper width " + std::to_string(st.x_dim()));
  std::vector<double> mu(st.y_dim()), ls(st.y_dim());
  for (std::size_t t = 0; t < xs.rows; ++t)
    st.step(xs.row(t), mu.data(), ls.data());
}

nn::Vec encoder_code(const nn::RnnModel& enc, const nn::Mat& xs) {
  if (xs.rows == 0) throw UsageError("encoder_code: no input rows");
  if (xs.cols != enc.d_in)
    throw ShapeError("encoder_code: input width " + std::to_string(xs.cols) +
                     " != encoder width " + std::to_string(enc.d_in));
  nn::RnnState state(enc.n_c);
  nn::RnnScratch ws;
  ws.resize(enc.n_c);
  for (std::size_t t = 0; t < xs.rows; ++t)
    nn::rnn_step_state(enc, xs.row(t), state, ws);
  nn::Vec code(2 * enc.n_c);
  std::memcpy(code.data(), state.h1.data(), sizeof(double) * enc.n_c);
  std::memcpy(code.data() + enc.n_c, state.h2.data(),
              sizeof(double) * enc.n_c);
  return code;
}

vi::PosteriorGaussian infer_posterior(const nn::RnnModel& enc,
                                      const vi::PosteriorNet& post,
                                      const nn::Mat& xs) {
  const nn::Vec code = encoder_code(enc, xs);
  vi::PosteriorTape tape;
  vi::PosteriorGaussian q;
  posterior_forward(post, code, tape, q);
  return q;
}

MixtureMoments mixture_moments(const double* mus, const double* sigmas,
                               std::size_t M) {
  if (M == 0) throw UsageError("mixture_moments: empty mixture");
  if (M == 1) return {mus[0], sigmas[0]};
  double mean = 0.0, msq = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    mean += mus[m];
    msq += mus[m] * mus[m] + sigmas[m] * sigmas[m];
  }
  mean /= static_cast<double>(M);
  msq /= static_cast<double>(M);
  const double var = msq - mean * mean;
  return {mean, std::sqrt(var > 0.0 ? var : 0.0)};
}

double mixture_quantile(const double* mus, const double* sigmas, std::size_t M,
                        double q) {
  if (M == 0) throw UsageError("mixture_quantile: empty mixture");
  if (!(q > 0.0 && q < 1.0))
    throw UsageError("mixture_quantile: level must lie strictly in (0, 1)");
  double lo = mus[0], hi = mus[0], smax = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    lo = std::min(lo, mus[m]);
    hi = std::max(hi, mus[m]);
    smax = std::max(smax, sigmas[m]);
  }
  lo -= 12.0 * smax + 1.0;
  hi += 12.0 * smax + 1.0;
  for (int i = 0; i < 60 && mixture_cdf(mus, sigmas, M, lo) > q; ++i)
    lo -= (hi - lo);
  for (int i = 0; i < 60 && mixture_cdf(mus, sigmas, M, hi) < q; ++i)
    hi += (hi - lo);
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_cdf(mus, sigmas, M, mid) < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

MixturePrediction decoder_mixture(const nn::RnnModel& dec,
                                  const dyngen::Trajectory& tr, vi::Window w,
                                  std::size_t T, const nn::Mat& Z) {
  const std::size_t M = Z.rows;
  if (M == 0) throw UsageError("decoder_mixture: needs at least one pass");
  if (T == 0) throw UsageError("decoder_mixture: empty window");
  if (w.start + T >= tr.y.rows)
    throw UsageError("decoder_mixture: window needs rows up to " +
                     std::to_string(w.start + T) + " but the trajectory has " +
                     std::to_string(tr.y.rows));
  const std::size_t d = dec.d_out;

  MixturePrediction out;
  out.comp_mu.reserve(M);
  out.comp_sigma.reserve(M);
  nn::Mat x;
  nn::RnnTape tape;
  const nn::RnnState s0(dec.n_c);
  for (std::size_t m = 0; m < M; ++m) {
    vi::fill_inputs(tr, w.start, T, Z.cols > 0 ? Z.row(m) : nullptr, Z.cols, x);
    rnn_forward(dec, x, s0, tape);
    nn::Mat cm(T, d), cs(T, d);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < d; ++i) {
        cm(t, i) = tape.mu(t, i);
        cs(t, i) = std::exp(nn::clamp_log_sigma(tape.log_sigma_raw(t, i)));
      }
    out.comp_mu.push_back(std::move(cm));
    out.comp_sigma.push_back(std::move(cs));
  }

  out.mu.resize(T, d);
  out.sigma.resize(T, d);
  std::vector<double> mus(M), sigmas(M);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t m = 0; m < M; ++m) {
        mus[m] = out.comp_mu[m](t, i);
        sigmas[m] = out.comp_sigma[m](t, i);
      }
      const auto mm = mixture_moments(mus.data(), sigmas.data(), M);
      out.mu(t, i) = mm.mu;
      out.sigma(t, i) = mm.sigma;
    }
  return out;
}

MixturePrediction one_step_predict(const vi::ViModel& model,
                                   const dyngen::Trajectory& tr,
                                   std::size_t cond_rows, std::size_t M,
                                   std::uint64_t seed,
                                   std::uint64_t stream_index) {
  if (cond_rows == 0 || cond_rows > tr.y.rows)
    throw UsageError("one_step_predict: conditioning span of " +
                     std::to_string(cond_rows) + " rows does not fit " +
                     std::to_string(tr.y.rows));
  if (M == 0) throw UsageError("one_step_predict: needs at least one draw");
  nn::Mat x_cond;
  vi::fill_inputs(tr, 0, cond_rows, nullptr, 0, x_cond);
  const auto q = infer_posterior(model.encoder, model.posterior, x_cond);

  auto rng = make_stream(seed, RngDomain::kOneStep, stream_index);
  nn::Mat z, eps;
  vi::reparam_sample(q, M, rng, z, eps);
  return decoder_mixture(model.decoder, tr, {0, 0}, tr.y.rows - 1, z);
}

ForecastEnsemble rollout(Stepper& st, const nn::Mat& y_hist,
                         const nn::Mat& u_full, const nn::Mat& Z,
                         std::size_t horizon, std::uint64_t seed,
                         std::uint64_t stream_base) {
  if (y_hist.rows == 0) throw UsageError("rollout: needs an initial row");
  if (horizon == 0) throw UsageError("rollout: empty horizon");
  const std::size_t tau = y_hist.rows - 1;
  const std::size_t d = st.y_dim();
  if (y_hist.cols != d)
    throw ShapeError("rollout: history width " + std::to_string(y_hist.cols) +
                     " != output width " + std::to_string(d));
  const std::size_t n_u = u_full.cols;
  if (n_u > 0 && u_full.rows < tau + horizon)
    throw UsageError("rollout: forcing supplies " +
                     std::to_string(u_full.rows) + " rows, needs " +
                     std::to_string(tau + horizon));
  const std::size_t n_z = Z.cols;
  const std::size_t n_s = n_z > 0 ? Z.rows : std::max<std::size_t>(Z.rows, 1);
  if (d + n_u + n_z != st.x_dim())
    throw ShapeError("rollout: input pieces " + std::to_string(d) + "+" +
                     std::to_string(n_u) + "+" + std::to_string(n_z) +
                     " do not fill stepper width " +
                     std::to_string(st.x_dim()));

  ForecastEnsemble ens;
  ens.n_s = n_s;
  ens.horizon = horizon;
  ens.d = d;
  ens.samples.assign(n_s, nn::Mat(horizon, d));

  std::vector<double> x(st.x_dim()), mu(d), ls(d), y_cur(d);
  for (std::size_t j = 0; j < n_s; ++j) {
    const double* zj = n_z > 0 ? Z.row(j) : nullptr;
    st.reset();
    for (std::size_t t = 0; t < tau; ++t) {
      std::memcpy(x.data(), y_hist.row(t), sizeof(double) * d);
      if (n_u > 0)
        std::memcpy(x.data() + d, u_full.row(t), sizeof(double) * n_u);
      if (n_z > 0)
        std::memcpy(x.data() + d + n_u, zj, sizeof(double) * n_z);
      st.step(x.data(), mu.data(), ls.data());
    }
    std::memcpy(y_cur.data(), y_hist.row(tau), sizeof(double) * d);
    auto noise = make_stream(seed, RngDomain::kForecast, stream_base + j);
    for (std::size_t f = 0; f < horizon; ++f) {
      std::memcpy(x.data(), y_cur.data(), sizeof(double) * d);
      if (n_u > 0)
        std::memcpy(x.data() + d, u_full.row(tau + f), sizeof(double) * n_u);
      if (n_z > 0)
        std::memcpy(x.data() + d + n_u, zj, sizeof(double) * n_z);
      st.step(x.data(), mu.data(), ls.data());
      bool out_of_band = false;
      for (std::size_t i = 0; i < d; ++i) {
        const double draw = mu[i] + std::exp(ls[i]) * noise.normal();
        ens.samples[j](f, i) = draw;
        y_cur[i] = draw;
        if (!(std::abs(draw) <= kGuard)) out_of_band = true;
      }
      if (out_of_band) {
        ens.complete = false;
        ens.diverged_sample = static_cast<long>(j);
        ens.diverged_step = static_cast<long>(f + 1);
        return ens;
      }
    }
  }
  return ens;
}

namespace {

ForecastEnsemble forecast_or_throw(Stepper& st, const dyngen::Trajectory& tr,
                                   std::size_t t0, std::size_t tau,
                                   std::size_t horizon, const nn::Mat& Z,
                                   std::uint64_t seed,
                                   std::uint64_t stream_base) {
  if (tau > t0)
    throw UsageError("forecast start " + std::to_string(t0) +
                     " cannot host a history of " + std::to_string(tau));
  if (t0 + horizon > tr.y.rows - 1)
    throw UsageError("forecast to row " + std::to_string(t0 + horizon) +
                     " exceeds the trajectory's " +
                     std::to_string(tr.y.rows - 1) + " steps");
  const nn::Mat y_hist = copy_rows(tr.y, t0 - tau, tau + 1);
  nn::Mat u_slice;
  if (forcing_cols(tr) > 0)
    u_slice = copy_rows(tr.u, t0 - tau, tau + horizon);
  auto ens = rollout(st, y_hist, u_slice, Z, horizon, seed, stream_base);
  if (!ens.complete)
    throw ForecastDiverged(
        "forecast sample " + std::to_string(ens.diverged_sample) +
            " left the guard band at step " +
            std::to_string(ens.diverged_step),
        ens.diverged_step, ens.diverged_sample);
  return ens;
}

}  // namespace

ForecastEnsemble mc_forecast_vi(const vi::ViModel& model,
                                const dyngen::Trajectory& tr, std::size_t t0,
                                std::size_t tau, std::size_t horizon,
                                std::size_t n_s, std::uint64_t seed,
                                std::uint64_t stream_base) {
  if (n_s == 0) throw UsageError("forecast: needs at least one sample");
  if (tau > t0)
    throw UsageError("forecast start " + std::to_string(t0) +
                     " cannot host a history of " + std::to_string(tau));
  nn::Mat x_cond;
  vi::fill_inputs(tr, t0 - tau, tau + 1, nullptr, 0, x_cond);
  const auto q = infer_posterior(model.encoder, model.posterior, x_cond);
  auto z_rng = make_stream(seed, RngDomain::kLatent, stream_base);
  nn::Mat z, eps;
  vi::reparam_sample(q, n_s, z_rng, z, eps);

  RnnStepper st(model.decoder);
  return forecast_or_throw(st, tr, t0, tau, horizon, z, seed, stream_base);
}

ForecastEnsemble mc_forecast_rnn(const nn::RnnModel& model,
                                 const dyngen::Trajectory& tr, std::size_t t0,
                                 std::size_t tau, std::size_t horizon,
                                 std::size_t n_s, std::uint64_t seed,
                                 std::uint64_t stream_base) {
  if (n_s == 0) throw UsageError("forecast: needs at least one sample");
  nn::Mat z(n_s, 0);
  RnnStepper st(model);
  return forecast_or_throw(st, tr, t0, tau, horizon, z, seed, stream_base);
}

}  // namespace vidyn::sim
