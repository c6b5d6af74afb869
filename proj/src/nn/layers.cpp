#include "vidyn/nn/layers.hpp"

#include <cmath>

#include "vidyn/kern/kernels.hpp"

namespace vidyn::nn {

namespace {

void init_uniform(Mat& W, RngStream& rng, std::size_t fan_in) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& w : W.a) w = rng.uniform(-bound, bound);
}

}  // namespace

void Linear::forward(const double* x, double* y) const {
  kern::matvec(y, W.data(), x, W.rows, W.cols);
  for (std::size_t i = 0; i < W.rows; ++i) y[i] += b[i];
}

void Linear::backward(const double* x, const double* dy, Linear& grad,
                      double* dx) const {
  kern::ger_acc(grad.W.data(), dy, x, W.rows, W.cols);
  kern::add_acc(grad.b.data(), dy, W.rows);
  if (dx != nullptr) kern::matvec_t_acc(dx, W.data(), dy, W.rows, W.cols);
}

void Linear::init(RngStream& rng) {
  init_uniform(W, rng, W.cols);
  nn::zero(b);
}

void Linear::zero() {
  W.zero();
  nn::zero(b);
}

GruCell::GruCell(std::size_t nh, std::size_t nx)
    : Wpx(nh, nx),
      Wph(nh, nh),
      Bp(nh, 0.0),
      Wqx(nh, nx),
      Wqh(nh, nh),
      Bq(nh, 0.0),
      Wrx(nh, nx),
      Wrh(nh, nh),
      Br(nh, 0.0) {}

void GruCell::init(RngStream& rng) {
  init_uniform(Wpx, rng, Wpx.cols);
  init_uniform(Wph, rng, Wph.cols);
  nn::zero(Bp);
  init_uniform(Wqx, rng, Wqx.cols);
  init_uniform(Wqh, rng, Wqh.cols);
  nn::zero(Bq);
  init_uniform(Wrx, rng, Wrx.cols);
  init_uniform(Wrh, rng, Wrh.cols);
  nn::zero(Br);
}

void GruCell::zero() {
  Wpx.zero();
  Wph.zero();
  nn::zero(Bp);
  Wqx.zero();
  Wqh.zero();
  nn::zero(Bq);
  Wrx.zero();
  Wrh.zero();
  nn::zero(Br);
}

void gru_forward(const GruCell& c, const double* x, const double* h, double* p,
                 double* q, double* r, double* h_next, GruScratch& ws) {
  const std::size_t nh = c.h_dim();
  const std::size_t nx = c.x_dim();
  double* a1 = ws.a1.data();
  double* a2 = ws.a2.data();
  double* qh = ws.qh.data();

  kern::matvec(a1, c.Wpx.data(), x, nh, nx);
  kern::matvec(a2, c.Wph.data(), h, nh, nh);
  for (std::size_t i = 0; i < nh; ++i) a1[i] += a2[i] + c.Bp[i];
  sigmoid(a1, p, nh);

  kern::matvec(a1, c.Wqx.data(), x, nh, nx);
  kern::matvec(a2, c.Wqh.data(), h, nh, nh);
  for (std::size_t i = 0; i < nh; ++i) a1[i] += a2[i] + c.Bq[i];
  sigmoid(a1, q, nh);

  kern::mul(qh, q, h, nh);
  kern::matvec(a1, c.Wrx.data(), x, nh, nx);
  kern::matvec(a2, c.Wrh.data(), qh, nh, nh);
  for (std::size_t i = 0; i < nh; ++i) a1[i] += a2[i] + c.Br[i];
  tanh_vec(a1, r, nh);

  kern::gru_blend(h_next, p, h, r, nh);
}

void gru_backward(const GruCell& c, const double* x, const double* h,
                  const double* p, const double* q, const double* r,
                  const double* dh, GruCell& grad, double* dx, double* dh_prev,
                  GruScratch& ws) {
  const std::size_t nh = c.h_dim();
  const std::size_t nx = c.x_dim();
  double* da = ws.a1.data();
  double* dqh = ws.a2.data();
  double* qh = ws.qh.data();

  // h' = (1-p) h + p r: split the incoming adjoint over the three factors.
  for (std::size_t i = 0; i < nh; ++i) dh_prev[i] += dh[i] * (1.0 - p[i]);

  // r branch (tanh pre-activation adjoint).
  for (std::size_t i = 0; i < nh; ++i)
    da[i] = dh[i] * p[i] * (1.0 - r[i] * r[i]);
  kern::mul(qh, q, h, nh);
  kern::ger_acc(grad.Wrx.data(), da, x, nh, nx);
  kern::ger_acc(grad.Wrh.data(), da, qh, nh, nh);
  kern::add_acc(grad.Br.data(), da, nh);
  if (dx != nullptr) kern::matvec_t_acc(dx, c.Wrx.data(), da, nh, nx);
  for (std::size_t i = 0; i < nh; ++i) dqh[i] = 0.0;
  kern::matvec_t_acc(dqh, c.Wrh.data(), da, nh, nh);
  kern::mul_acc(dh_prev, dqh, q, nh);

  // q branch; dq = dqh .* h, then sigmoid pre-activation adjoint.
  for (std::size_t i = 0; i < nh; ++i)
    da[i] = dqh[i] * h[i] * q[i] * (1.0 - q[i]);
  kern::ger_acc(grad.Wqx.data(), da, x, nh, nx);
  kern::ger_acc(grad.Wqh.data(), da, h, nh, nh);
  kern::add_acc(grad.Bq.data(), da, nh);
  if (dx != nullptr) kern::matvec_t_acc(dx, c.Wqx.data(), da, nh, nx);
  kern::matvec_t_acc(dh_prev, c.Wqh.data(), da, nh, nh);

  // p branch; dp = dh .* (r - h).
  for (std::size_t i = 0; i < nh; ++i)
    da[i] = dh[i] * (r[i] - h[i]) * p[i] * (1.0 - p[i]);
  kern::ger_acc(grad.Wpx.data(), da, x, nh, nx);
  kern::ger_acc(grad.Wph.data(), da, h, nh, nh);
  kern::add_acc(grad.Bp.data(), da, nh);
  if (dx != nullptr) kern::matvec_t_acc(dx, c.Wpx.data(), da, nh, nx);
  kern::matvec_t_acc(dh_prev, c.Wph.data(), da, nh, nh);
}

void relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x_pre, const double* dy, double* dx,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x_pre[i] > 0.0 ? dy[i] : 0.0;
}

void sigmoid(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-a[i]));
}

void tanh_vec(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(a[i]);
}

}  // namespace vidyn::nn
