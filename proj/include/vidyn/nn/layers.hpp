#pragma once

#include <cstddef>
#include <vector>

#include "vidyn/common/rng.hpp"
#include "vidyn/nn/tensor.hpp"

namespace vidyn::nn {

// Limits of the log-sigma clamp applied by every Gaussian head. Gradients are
// zeroed outside the open interval.
constexpr double kLogSigmaMin = -7.0;
constexpr double kLogSigmaMax = 2.0;

inline double clamp_log_sigma(double raw) {
  if (raw < kLogSigmaMin) return kLogSigmaMin;
  if (raw > kLogSigmaMax) return kLogSigmaMax;
  return raw;
}

inline bool log_sigma_grad_open(double raw) {
  return raw > kLogSigmaMin && raw < kLogSigmaMax;
}

// y = W x + b.
struct Linear {
  Mat W;  // out x in
  Vec b;  // out

  Linear() = default;
  Linear(std::size_t out, std::size_t in) : W(out, in), b(out, 0.0) {}

  std::size_t in_dim() const { return W.cols; }
  std::size_t out_dim() const { return W.rows; }

  void forward(const double* x, double* y) const;
  // Accumulates dW += dy x^T, db += dy into grad; optionally dx += W^T dy.
  void backward(const double* x, const double* dy, Linear& grad,
                double* dx) const;

  void init(RngStream& rng);
  void zero();
};

// Gated recurrent cell:
//   p = sigmoid(W_px x + W_ph h + B_p)
//   q = sigmoid(W_qx x + W_qh h + B_q)
//   r = tanh(W_rx x + W_rh (q .* h) + B_r)
//   h' = (1 - p) .* h + p .* r
struct GruCell {
  Mat Wpx, Wph;
  Vec Bp;
  Mat Wqx, Wqh;
  Vec Bq;
  Mat Wrx, Wrh;
  Vec Br;

  GruCell() = default;
  GruCell(std::size_t nh, std::size_t nx);

  std::size_t x_dim() const { return Wpx.cols; }
  std::size_t h_dim() const { return Wpx.rows; }

  void init(RngStream& rng);
  void zero();
};

// Scratch vectors for one cell evaluation; sized to h_dim.
struct GruScratch {
  Vec a1, a2, qh;
  void resize(std::size_t nh) {
    a1.assign(nh, 0.0);
    a2.assign(nh, 0.0);
    qh.assign(nh, 0.0);
  }
};

// Writes the gate activations (needed later by the backward pass) and the new
// state. h_next may alias h.
void gru_forward(const GruCell& c, const double* x, const double* h, double* p,
                 double* q, double* r, double* h_next, GruScratch& ws);

// Backward through one cell application. dh is the adjoint of h'; accumulates
// parameter gradients into grad and adjoints into dx (may be null) and
// dh_prev. dh_prev must not alias dh.
void gru_backward(const GruCell& c, const double* x, const double* h,
                  const double* p, const double* q, const double* r,
                  const double* dh, GruCell& grad, double* dx, double* dh_prev,
                  GruScratch& ws);

// Elementwise nonlinearities; the scalar libm forms are used everywhere so all
// kernel lanes agree bit-for-bit on these.
void relu(const double* x, double* y, std::size_t n);
void relu_backward(const double* x_pre, const double* dy, double* dx,
                   std::size_t n);
void sigmoid(const double* a, double* y, std::size_t n);
void tanh_vec(const double* a, double* y, std::size_t n);

}  // namespace vidyn::nn
