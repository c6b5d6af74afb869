#include "vidyn/nn/rnn.hpp"

#include <cstring>

#include "vidyn/common/error.hpp"
#include "vidyn/kern/kernels.hpp"

namespace vidyn::nn {

RnnModel::RnnModel(std::size_t d_in_, std::size_t d_out_, std::size_t n_c_)
    : d_in(d_in_),
      d_out(d_out_),
      n_c(n_c_),
      input(n_c_, d_in_),
      gru1(n_c_, n_c_),
      gru2(n_c_, n_c_),
      head(n_c_, n_c_),
      mu(d_out_, n_c_),
      log_sigma(d_out_, n_c_) {}

void RnnModel::init_params(RngStream& rng) {
  input.init(rng);
  gru1.init(rng);
  gru2.init(rng);
  head.init(rng);
  mu.init(rng);
  log_sigma.init(rng);
}

void RnnModel::zero_all() {
  input.zero();
  gru1.zero();
  gru2.zero();
  head.zero();
  mu.zero();
  log_sigma.zero();
}

namespace {

void collect_gru(const char* prefix, GruCell& c, std::vector<ParamView>& out) {
  const std::string p(prefix);
  out.push_back({p + ".Wpx", c.Wpx.data(), c.Wpx.size()});
  out.push_back({p + ".Wph", c.Wph.data(), c.Wph.size()});
  out.push_back({p + ".Bp", c.Bp.data(), c.Bp.size()});
  out.push_back({p + ".Wqx", c.Wqx.data(), c.Wqx.size()});
  out.push_back({p + ".Wqh", c.Wqh.data(), c.Wqh.size()});
  out.push_back({p + ".Bq", c.Bq.data(), c.Bq.size()});
  out.push_back({p + ".Wrx", c.Wrx.data(), c.Wrx.size()});
  out.push_back({p + ".Wrh", c.Wrh.data(), c.Wrh.size()});
  out.push_back({p + ".Br", c.Br.data(), c.Br.size()});
}

void collect_linear(const char* prefix, Linear& l,
                    std::vector<ParamView>& out) {
  const std::string p(prefix);
  out.push_back({p + ".W", l.W.data(), l.W.size()});
  out.push_back({p + ".b", l.b.data(), l.b.size()});
}

}  // namespace

std::vector<ParamView> RnnModel::params() {
  std::vector<ParamView> out;
  collect_linear("input", input, out);
  collect_gru("gru1", gru1, out);
  collect_gru("gru2", gru2, out);
  collect_linear("head", head, out);
  collect_linear("mu", mu, out);
  collect_linear("log_sigma", log_sigma, out);
  return out;
}

std::vector<ConstParamView> RnnModel::params() const {
  auto views = const_cast<RnnModel*>(this)->params();
  std::vector<ConstParamView> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back({v.name, v.data, v.size});
  return out;
}

std::size_t RnnModel::param_count() const {
  std::size_t n = 0;
  for (const auto& v : params()) n += v.size;
  return n;
}

void RnnScratch::resize(std::size_t n_c) {
  gru.resize(n_c);
  psi_pre.assign(n_c, 0.0);
  psi.assign(n_c, 0.0);
  h1_new.assign(n_c, 0.0);
  g_pre.assign(n_c, 0.0);
  g.assign(n_c, 0.0);
  p1.assign(n_c, 0.0);
  q1.assign(n_c, 0.0);
  r1.assign(n_c, 0.0);
  p2.assign(n_c, 0.0);
  q2.assign(n_c, 0.0);
  r2.assign(n_c, 0.0);
  dh1_carry.assign(n_c, 0.0);
  dh2_carry.assign(n_c, 0.0);
  dh1_next.assign(n_c, 0.0);
  dh2_next.assign(n_c, 0.0);
  dh1_tot.assign(n_c, 0.0);
  dh2_tot.assign(n_c, 0.0);
  dpsi.assign(n_c, 0.0);
  dg.assign(n_c, 0.0);
}

void rnn_step(const RnnModel& m, const double* x, RnnState& s, double* mu_out,
              double* log_sigma_out, RnnScratch& ws) {
  rnn_step_state(m, x, s, ws);
  m.head.forward(s.h2.data(), ws.g_pre.data());
  relu(ws.g_pre.data(), ws.g.data(), m.n_c);
  m.mu.forward(ws.g.data(), mu_out);
  m.log_sigma.forward(ws.g.data(), log_sigma_out);
  for (std::size_t i = 0; i < m.d_out; ++i)
    log_sigma_out[i] = clamp_log_sigma(log_sigma_out[i]);
}

void rnn_step_state(const RnnModel& m, const double* x, RnnState& s,
                    RnnScratch& ws) {
  m.input.forward(x, ws.psi_pre.data());
  relu(ws.psi_pre.data(), ws.psi.data(), m.n_c);
  gru_forward(m.gru1, ws.psi.data(), s.h1.data(), ws.p1.data(), ws.q1.data(),
              ws.r1.data(), ws.h1_new.data(), ws.gru);
  gru_forward(m.gru2, ws.h1_new.data(), s.h2.data(), ws.p2.data(),
              ws.q2.data(), ws.r2.data(), s.h2.data(), ws.gru);
  s.h1.swap(ws.h1_new);
}

void RnnTape::resize(std::size_t T_, std::size_t d_in_, std::size_t d_out_,
                     std::size_t n_c_) {
  if (T == T_ && d_in == d_in_ && d_out == d_out_ && n_c == n_c_) return;
  T = T_;
  d_in = d_in_;
  d_out = d_out_;
  n_c = n_c_;
  x.resize(T, d_in);
  psi_pre.resize(T, n_c);
  psi.resize(T, n_c);
  h1.resize(T + 1, n_c);
  h2.resize(T + 1, n_c);
  p1.resize(T, n_c);
  q1.resize(T, n_c);
  r1.resize(T, n_c);
  p2.resize(T, n_c);
  q2.resize(T, n_c);
  r2.resize(T, n_c);
  g_pre.resize(T, n_c);
  g.resize(T, n_c);
  mu.resize(T, d_out);
  log_sigma_raw.resize(T, d_out);
}

void rnn_forward(const RnnModel& m, const Mat& xs, const RnnState& s0,
                 RnnTape& tape) {
  if (xs.cols != m.d_in)
    throw ShapeError("rnn_forward: input width " + std::to_string(xs.cols) +
                     " does not match model d_in " + std::to_string(m.d_in));
  const std::size_t T = xs.rows;
  tape.resize(T, m.d_in, m.d_out, m.n_c);
  std::memcpy(tape.x.data(), xs.data(), sizeof(double) * xs.size());
  std::memcpy(tape.h1.row(0), s0.h1.data(), sizeof(double) * m.n_c);
  std::memcpy(tape.h2.row(0), s0.h2.data(), sizeof(double) * m.n_c);

  GruScratch gs;
  gs.resize(m.n_c);
  for (std::size_t t = 0; t < T; ++t) {
    m.input.forward(tape.x.row(t), tape.psi_pre.row(t));
    relu(tape.psi_pre.row(t), tape.psi.row(t), m.n_c);
    gru_forward(m.gru1, tape.psi.row(t), tape.h1.row(t), tape.p1.row(t),
                tape.q1.row(t), tape.r1.row(t), tape.h1.row(t + 1), gs);
    gru_forward(m.gru2, tape.h1.row(t + 1), tape.h2.row(t), tape.p2.row(t),
                tape.q2.row(t), tape.r2.row(t), tape.h2.row(t + 1), gs);
    m.head.forward(tape.h2.row(t + 1), tape.g_pre.row(t));
    relu(tape.g_pre.row(t), tape.g.row(t), m.n_c);
    m.mu.forward(tape.g.row(t), tape.mu.row(t));
    m.log_sigma.forward(tape.g.row(t), tape.log_sigma_raw.row(t));
  }
}

void tape_log_sigma(const RnnTape& tape, std::size_t t, double* out) {
  const double* raw = tape.log_sigma_raw.row(t);
  for (std::size_t i = 0; i < tape.d_out; ++i) out[i] = clamp_log_sigma(raw[i]);
}

void rnn_backward(const RnnModel& m, const RnnTape& tape, const Mat& d_mu,
                  const Mat& d_log_sigma, RnnModel& grad, Mat* dx,
                  RnnScratch& ws) {
  if (tape.T == 0) throw UsageError("rnn_backward: empty tape");
  const std::size_t T = tape.T;
  const std::size_t n_c = m.n_c;
  const std::size_t d_out = m.d_out;

  ws.resize(n_c);
  Vec dls(d_out, 0.0);
  zero(ws.dh1_carry);
  zero(ws.dh2_carry);

  for (std::size_t t = T; t-- > 0;) {
    // Head: mu and clamped log-sigma back to g.
    const double* raw = tape.log_sigma_raw.row(t);
    const double* dls_in = d_log_sigma.row(t);
    for (std::size_t i = 0; i < d_out; ++i)
      dls[i] = log_sigma_grad_open(raw[i]) ? dls_in[i] : 0.0;

    zero(ws.dg);
    m.mu.backward(tape.g.row(t), d_mu.row(t), grad.mu, ws.dg.data());
    m.log_sigma.backward(tape.g.row(t), dls.data(), grad.log_sigma,
                         ws.dg.data());
    relu_backward(tape.g_pre.row(t), ws.dg.data(), ws.dg.data(), n_c);

    // g = ReLU(L_g(h2')): adjoint of h2' collects the head term plus the
    // carry from step t+1.
    std::memcpy(ws.dh2_tot.data(), ws.dh2_carry.data(), sizeof(double) * n_c);
    m.head.backward(tape.h2.row(t + 1), ws.dg.data(), grad.head,
                    ws.dh2_tot.data());

    // Second cell: x was h1', h was h2(t).
    zero(ws.dh1_tot);
    zero(ws.dh2_next);
    gru_backward(m.gru2, tape.h1.row(t + 1), tape.h2.row(t), tape.p2.row(t),
                 tape.q2.row(t), tape.r2.row(t), ws.dh2_tot.data(), grad.gru2,
                 ws.dh1_tot.data(), ws.dh2_next.data(), ws.gru);
    ws.dh2_carry.swap(ws.dh2_next);

    // First cell: x was psi, h was h1(t); fold in the carry from step t+1.
    kern::add_acc(ws.dh1_tot.data(), ws.dh1_carry.data(), n_c);
    zero(ws.dpsi);
    zero(ws.dh1_next);
    gru_backward(m.gru1, tape.psi.row(t), tape.h1.row(t), tape.p1.row(t),
                 tape.q1.row(t), tape.r1.row(t), ws.dh1_tot.data(), grad.gru1,
                 ws.dpsi.data(), ws.dh1_next.data(), ws.gru);
    ws.dh1_carry.swap(ws.dh1_next);

    // Input layer.
    relu_backward(tape.psi_pre.row(t), ws.dpsi.data(), ws.dpsi.data(), n_c);
    m.input.backward(tape.x.row(t), ws.dpsi.data(), grad.input,
                     dx != nullptr ? dx->row(t) : nullptr);
  }
}

}  // namespace vidyn::nn
