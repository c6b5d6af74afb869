#pragma once

#include <cstddef>
#include <vector>

#include "vidyn/common/rng.hpp"
#include "vidyn/nn/layers.hpp"
#include "vidyn/nn/tensor.hpp"

namespace vidyn::nn {

// Two-level gated recurrent network with a Gaussian head:
//   psi   = ReLU(L_in(x))
//   h1'   = GRU1(h1, psi)
//   h2'   = GRU2(h2, h1')
//   g     = ReLU(L_g(h2'))
//   mu    = L_mu(g)
//   logsd = clamp(L_sigma(g))
// Serves as encoder (x = y||u), decoder (x = y||u||z), and plain baseline
// (x = y||u); only d_in differs.
struct RnnModel {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t n_c = 0;

  Linear input;      // n_c x d_in
  GruCell gru1;      // h: n_c, x: n_c
  GruCell gru2;      // h: n_c, x: n_c
  Linear head;       // n_c x n_c
  Linear mu;         // d_out x n_c
  Linear log_sigma;  // d_out x n_c

  RnnModel() = default;
  RnnModel(std::size_t d_in_, std::size_t d_out_, std::size_t n_c_);

  void init_params(RngStream& rng);
  void zero_all();
  std::size_t param_count() const;
  std::vector<ParamView> params();
  std::vector<ConstParamView> params() const;
};

struct RnnState {
  Vec h1, h2;
  explicit RnnState(std::size_t n_c = 0) : h1(n_c, 0.0), h2(n_c, 0.0) {}
  void reset() {
    zero(h1);
    zero(h2);
  }
};

// Workspace for stepping and for the reverse pass; reusable across calls of
// matching width.
struct RnnScratch {
  GruScratch gru;
  Vec psi_pre, psi, h1_new, g_pre, g;
  Vec p1, q1, r1, p2, q2, r2;
  // Reverse-pass adjoint buffers.
  Vec dh1_carry, dh2_carry, dh1_next, dh2_next, dh1_tot, dh2_tot, dpsi, dg;
  void resize(std::size_t n_c);
};

// One step without recording: advances state in place and fills the head
// outputs (log_sigma already clamped).
void rnn_step(const RnnModel& m, const double* x, RnnState& s, double* mu,
              double* log_sigma, RnnScratch& ws);

// One step advancing the state only; used for spin-up where the head outputs
// are not consumed.
void rnn_step_state(const RnnModel& m, const double* x, RnnState& s,
                    RnnScratch& ws);

// Forward activations recorded over a window, laid out step-major so the
// backward pass can stream through them in reverse.
struct RnnTape {
  std::size_t T = 0;
  std::size_t d_in = 0, d_out = 0, n_c = 0;
  Mat x;                  // T x d_in
  Mat psi_pre, psi;       // T x n_c
  Mat h1, h2;             // (T+1) x n_c; row 0 is the initial state
  Mat p1, q1, r1;         // T x n_c
  Mat p2, q2, r2;         // T x n_c
  Mat g_pre, g;           // T x n_c
  Mat mu;                 // T x d_out
  Mat log_sigma_raw;      // T x d_out, before clamping

  void resize(std::size_t T_, std::size_t d_in_, std::size_t d_out_,
              std::size_t n_c_);
};

// Runs the model over xs (T x d_in) from initial state s0, recording the tape.
// The final state is rows T of tape.h1/h2.
void rnn_forward(const RnnModel& m, const Mat& xs, const RnnState& s0,
                 RnnTape& tape);

// Clamped log-sigma for tape row t (what the forward pass emitted).
void tape_log_sigma(const RnnTape& tape, std::size_t t, double* out);

// Reverse pass: d_mu and d_log_sigma are T x d_out adjoints of the head
// outputs (the clamp's dead zones are applied internally from the recorded raw
// values). Accumulates parameter gradients into grad; when dx is non-null
// (T x d_in, zero-initialized by caller) accumulates input adjoints.
void rnn_backward(const RnnModel& m, const RnnTape& tape, const Mat& d_mu,
                  const Mat& d_log_sigma, RnnModel& grad, Mat* dx,
                  RnnScratch& ws);

}  // namespace vidyn::nn
