#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/nn/rnn.hpp"
#include "vidyn/vi/model.hpp"
#include "vidyn/vi/train.hpp"

namespace vidyn::sim {

// Closed-loop generator: consumes one input row, emits the predictive
// Gaussian for the next step.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual std::size_t x_dim() const = 0;
  virtual std::size_t y_dim() const = 0;
  virtual void reset() = 0;
  virtual void step(const double* x, double* mu, double* log_sigma) = 0;
};

class RnnStepper final : public Stepper {
 public:
  explicit RnnStepper(const nn::RnnModel& m) : m_(&m), state_(m.n_c) {
    ws_.resize(m.n_c);
  }
  std::size_t x_dim() const override { return m_->d_in; }
  std::size_t y_dim() const override { return m_->d_out; }
  void reset() override { state_.reset(); }
  void step(const double* x, double* mu, double* log_sigma) override {
    nn::rnn_step(*m_, x, state_, mu, log_sigma, ws_);
  }

 private:
  const nn::RnnModel* m_;
  nn::RnnState state_;
  nn::RnnScratch ws_;
};

// Teacher-forced warm-up: feeds every row of xs, discarding the outputs.
void spin_up(Stepper& st, const nn::Mat& xs);

// Final two-level encoder state over the rows of xs, concatenated to the
// 2*n_c code the posterior consumes.
nn::Vec encoder_code(const nn::RnnModel& enc, const nn::Mat& xs);

// Runs the encoder over xs and maps the code through the posterior net.
vi::PosteriorGaussian infer_posterior(const nn::RnnModel& enc,
                                      const vi::PosteriorNet& post,
                                      const nn::Mat& xs);

struct MixtureMoments {
  double mu = 0.0;
  double sigma = 0.0;
};

// Moments of an equal-weight Gaussian mixture: mu = mean of component means,
// sigma^2 = mean(mu_m^2 + sigma_m^2) - mu^2. A single component passes
// through exactly.
MixtureMoments mixture_moments(const double* mus, const double* sigmas,
                               std::size_t M);

// Quantile of the equal-weight Gaussian mixture CDF, found by bisection.
double mixture_quantile(const double* mus, const double* sigmas, std::size_t M,
                        double q);

// Teacher-forced predictive mixture over one window: each row of Z drives one
// decoder pass over rows [w.start, w.start + T) of the trajectory, and row t
// of every output matrix describes the prediction for row w.start + t + 1.
// Z with zero columns runs the latent-free path; its row count is then the
// number of passes (normally 1).
struct MixturePrediction {
  nn::Mat mu, sigma;                         // T x d mixture moments
  std::vector<nn::Mat> comp_mu, comp_sigma;  // per-component T x d
};

MixturePrediction decoder_mixture(const nn::RnnModel& dec,
                                  const dyngen::Trajectory& tr, vi::Window w,
                                  std::size_t T, const nn::Mat& Z);

// Conditions the posterior on the first cond_rows rows of the trajectory,
// draws M latents from it (stream kOneStep / stream_index), and scores the
// whole trajectory teacher-forced once per draw.
MixturePrediction one_step_predict(const vi::ViModel& model,
                                   const dyngen::Trajectory& tr,
                                   std::size_t cond_rows, std::size_t M,
                                   std::uint64_t seed,
                                   std::uint64_t stream_index);

// Monte Carlo closed-loop forecast. Each sample is teacher-forced over the
// tau = y_hist.rows - 1 history transitions and then fed back its own noisy
// draws for `horizon` steps; row f of a sample is the draw for forecast step
// f+1. On a diverged sample (|y| > 1e6) the ensemble is returned with
// complete = false, the offending sample partially filled, and later samples
// untouched.
struct ForecastEnsemble {
  std::size_t n_s = 0, horizon = 0, d = 0;
  std::vector<nn::Mat> samples;  // n_s matrices, horizon x d
  bool complete = true;
  long diverged_sample = -1;
  long diverged_step = -1;
};

// u_full must supply tau + horizon rows (row t forces the step consuming row
// t); Z supplies one latent row per sample (zero columns for the latent-free
// path). Observation noise for sample j comes from stream kForecast with
// index stream_base + j, so bases for distinct forecasts must be at least n_s
// apart. Samples are generated in index order, so results do not depend on
// how callers schedule surrounding work.
ForecastEnsemble rollout(Stepper& st, const nn::Mat& y_hist,
                         const nn::Mat& u_full, const nn::Mat& Z,
                         std::size_t horizon, std::uint64_t seed,
                         std::uint64_t stream_base);

// Forecast from row t0 of a trajectory: the posterior is conditioned on rows
// [t0 - tau, t0], each sample draws its own latent (stream kLatent /
// stream_base), and the decoder rolls forward through rows
// [t0, t0 + horizon). Throws ForecastDiverged when a sample leaves the guard
// band.
ForecastEnsemble mc_forecast_vi(const vi::ViModel& model,
                                const dyngen::Trajectory& tr, std::size_t t0,
                                std::size_t tau, std::size_t horizon,
                                std::size_t n_s, std::uint64_t seed,
                                std::uint64_t stream_base);

// Latent-free counterpart on a plain model.
ForecastEnsemble mc_forecast_rnn(const nn::RnnModel& model,
                                 const dyngen::Trajectory& tr, std::size_t t0,
                                 std::size_t tau, std::size_t horizon,
                                 std::size_t n_s, std::uint64_t seed,
                                 std::uint64_t stream_base);

}  // namespace vidyn::sim
