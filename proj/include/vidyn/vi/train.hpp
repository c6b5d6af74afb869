#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/nn/rnn.hpp"
#include "vidyn/optim/adam.hpp"
#include "vidyn/vi/model.hpp"

namespace vidyn::vi {

struct TrainConfig {
  std::size_t seq_len = 200;   // window length T_w (steps predicted per window)
  std::size_t batch = 20;      // windows per iteration
  std::size_t M = 25;          // latent samples per window (ignored by train_rnn)
  std::size_t iters = 30000;
  double lambda = 1.0;         // weight on the divergence term
  double sigma_z = 1.0;        // prior scale
  double lr_max = 1e-3;
  double lr_min = 1e-4;
  optim::AdamConfig adam;
  std::uint64_t seed = 1;
  std::size_t val_windows = 20;
  std::size_t val_every = 500;
  std::size_t threads = 1;
};

// A training window: rows [start, start + seq_len] of one trajectory. The
// model consumes rows start .. start+seq_len-1 as inputs and is scored on
// rows start+1 .. start+seq_len.
struct Window {
  std::size_t traj = 0;
  std::size_t start = 0;
};

struct TrainLogRow {
  std::size_t iter = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  double l_q = 0.0;
  double l_y = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  double best_val_loss = 0.0;
  std::size_t best_iteration = 0;  // 1-based iteration of the best validation
  std::vector<TrainLogRow> log;    // one row per validation point
};

// Builds model inputs x_t = y_{start+t} || u_{start+t} || z for t in [0, T).
// z may be null (n_z = 0); otherwise it supplies n_z trailing columns shared
// by every row.
void fill_inputs(const dyngen::Trajectory& tr, std::size_t start, std::size_t T,
                 const double* z, std::size_t n_z, nn::Mat& x);

// Reusable buffers for one sequence pass.
struct SeqScratch {
  nn::Mat x;
  nn::Mat d_mu, d_ls;
  nn::RnnTape tape;
  nn::RnnScratch ws;
  nn::Mat dx;  // input adjoints, filled only when requested
};

// One-step-ahead Gaussian score of `model` on a window: the summed negative
// log density of rows start+1 .. start+T under the per-step predictive
// Gaussians. With `grad` non-null the parameter gradient is accumulated into
// it; with `dx` additionally non-null the input adjoints are written there
// (T x d_in, overwritten). `z` supplies trailing input columns as in
// fill_inputs. `adj_scale` multiplies the per-step adjoints (not the returned
// score), letting callers average gradients over samples in one pass.
double sequence_nll(const nn::RnnModel& model, const dyngen::Trajectory& tr,
                    Window w, std::size_t T, const double* z, std::size_t n_z,
                    double adj_scale, SeqScratch& s, nn::RnnModel* grad,
                    nn::Mat* dx);

// Trains `model` (initialised inside from the seed) by one-step-ahead
// Gaussian score over randomly sampled training windows. Serves both the
// observation encoder and the latent-free reference model. On return the
// model holds the parameters of the best validation checkpoint.
TrainResult train_rnn(nn::RnnModel& model, const dyngen::Dataset& ds,
                      const TrainConfig& cfg);

// Gradient accumulators for the trainable half of a ViModel, shaped like the
// posterior net and decoder.
struct ViGrads {
  PosteriorNet post;
  nn::RnnModel dec;

  ViGrads(const ViModel& shape)
      : post(shape.posterior.d_code, shape.posterior.n_z,
             shape.posterior.hidden.size()),
        dec(shape.decoder.d_in, shape.decoder.d_out, shape.decoder.n_c) {}
  void zero_all() {
    post.zero_all();
    dec.zero_all();
  }
  std::vector<nn::ParamView> params() {
    return concat_views(post.params(), dec.params());
  }
};

struct ViScratch {
  nn::Mat x_enc;
  nn::RnnScratch enc_ws;
  PosteriorTape post_tape;
  PosteriorGaussian q;
  nn::Mat z;                         // M x n_z
  std::vector<SeqScratch> dec;       // one slot per latent sample
  std::vector<nn::RnnModel> dec_gs;  // per-sample gradient slots
  nn::Mat dz;                        // M x n_z input adjoints
  nn::Vec dz_sum, dz_eps;            // reductions over samples
  nn::Vec d_m, d_ls;
};

struct ViWindowStats {
  double l_q = 0.0;
  double l_y = 0.0;
};

// Forward (and optionally backward) pass of the variational objective on one
// window with the latent draws fixed by `eps` (M x n_z): the encoder runs
// over rows start .. start+seq_len, the posterior maps its final state to
// (m_q, sigma_q), z_m = m_q + sigma_q * eps_m, and the decoder scores the
// window once per sample. Returns the divergence term l_q and the
// sample-averaged score l_y; the window loss is lambda * l_q + l_y.
// With grads non-null, gradients of that loss for the posterior net and
// decoder are accumulated into it (the encoder is never differentiated).
// Deterministic for any cfg.threads.
ViWindowStats vi_window_pass(const ViModel& model, const dyngen::Trajectory& tr,
                             Window w, const TrainConfig& cfg,
                             const nn::Mat& eps, ViGrads* grads, ViScratch& s);

// Trains the posterior net and decoder of `model` against the variational
// objective; the encoder must already be loaded and stays bit-frozen. Both
// trainable parts are initialised inside from the seed. On return the model
// holds the best validation checkpoint.
TrainResult train_vi(ViModel& model, const dyngen::Dataset& ds,
                     const TrainConfig& cfg);

}  // namespace vidyn::vi
