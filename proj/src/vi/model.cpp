#include "vidyn/vi/model.hpp"

#include <cmath>

#include "vidyn/common/error.hpp"
#include "vidyn/kern/kernels.hpp"
#include "vidyn/nn/layers.hpp"

namespace vidyn::vi {

PosteriorNet::PosteriorNet(std::size_t d_code_, std::size_t n_z_,
                           std::size_t n_layers)
    : d_code(d_code_), n_z(n_z_) {
  hidden.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) hidden.emplace_back(d_code, d_code);
  m_head = nn::Linear(n_z, d_code);
  s_head = nn::Linear(n_z, d_code);
}

void PosteriorNet::init_params(RngStream& rng) {
  for (auto& l : hidden) l.init(rng);
  m_head.init(rng);
  s_head.init(rng);
}

void PosteriorNet::zero_all() {
  for (auto& l : hidden) l.zero();
  m_head.zero();
  s_head.zero();
}

std::size_t PosteriorNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : hidden) n += l.W.size() + l.b.size();
  n += m_head.W.size() + m_head.b.size();
  n += s_head.W.size() + s_head.b.size();
  return n;
}

std::vector<nn::ParamView> PosteriorNet::params() {
  std::vector<nn::ParamView> v;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string base = "h" + std::to_string(i);
    v.push_back({base + ".W", hidden[i].W.data(), hidden[i].W.size()});
    v.push_back({base + ".b", hidden[i].b.data(), hidden[i].b.size()});
  }
  v.push_back({"m.W", m_head.W.data(), m_head.W.size()});
  v.push_back({"m.b", m_head.b.data(), m_head.b.size()});
  v.push_back({"s.W", s_head.W.data(), s_head.W.size()});
  v.push_back({"s.b", s_head.b.data(), s_head.b.size()});
  return v;
}

std::vector<nn::ConstParamView> PosteriorNet::params() const {
  auto mut = const_cast<PosteriorNet*>(this)->params();
  std::vector<nn::ConstParamView> v;
  v.reserve(mut.size());
  for (const auto& p : mut) v.push_back({p.name, p.data, p.size});
  return v;
}

void posterior_forward(const PosteriorNet& net, const nn::Vec& code,
                       PosteriorTape& tape, PosteriorGaussian& q) {
  if (code.size() != net.d_code)
    throw ShapeError("posterior input width " + std::to_string(code.size()) +
                     " != " + std::to_string(net.d_code));
  const std::size_t L = net.hidden.size();
  tape.v0 = code;
  tape.pre.resize(L);
  tape.act.resize(L);
  const nn::Vec* v = &tape.v0;
  for (std::size_t i = 0; i < L; ++i) {
    tape.pre[i].assign(net.d_code, 0.0);
    tape.act[i].assign(net.d_code, 0.0);
    net.hidden[i].forward(v->data(), tape.pre[i].data());
    nn::relu(tape.pre[i].data(), tape.act[i].data(), net.d_code);
    v = &tape.act[i];
  }
  tape.m_raw.assign(net.n_z, 0.0);
  tape.log_sigma_raw.assign(net.n_z, 0.0);
  net.m_head.forward(v->data(), tape.m_raw.data());
  net.s_head.forward(v->data(), tape.log_sigma_raw.data());

  q.m_q = tape.m_raw;
  q.log_sigma_q.resize(net.n_z);
  q.sigma_q.resize(net.n_z);
  for (std::size_t i = 0; i < net.n_z; ++i) {
    q.log_sigma_q[i] = nn::clamp_log_sigma(tape.log_sigma_raw[i]);
    q.sigma_q[i] = std::exp(q.log_sigma_q[i]);
  }
}

void posterior_backward(const PosteriorNet& net, const PosteriorTape& tape,
                        const nn::Vec& d_m, const nn::Vec& d_log_sigma,
                        PosteriorNet& grad, nn::Vec* d_code) {
  const std::size_t L = net.hidden.size();
  if (tape.act.size() != L) throw UsageError("posterior tape not recorded");

  nn::Vec d_ls(net.n_z);
  for (std::size_t i = 0; i < net.n_z; ++i)
    d_ls[i] =
        nn::log_sigma_grad_open(tape.log_sigma_raw[i]) ? d_log_sigma[i] : 0.0;

  const nn::Vec& top = L > 0 ? tape.act[L - 1] : tape.v0;
  nn::Vec d_top(net.d_code, 0.0);
  net.m_head.backward(top.data(), d_m.data(), grad.m_head, d_top.data());
  net.s_head.backward(top.data(), d_ls.data(), grad.s_head, d_top.data());

  nn::Vec d_pre(net.d_code), d_prev(net.d_code);
  for (std::size_t i = L; i-- > 0;) {
    nn::zero(d_pre);
    nn::relu_backward(tape.pre[i].data(), d_top.data(), d_pre.data(),
                      net.d_code);
    const nn::Vec& below = i == 0 ? tape.v0 : tape.act[i - 1];
    nn::zero(d_prev);
    net.hidden[i].backward(below.data(), d_pre.data(), grad.hidden[i],
                           d_prev.data());
    d_top.swap(d_prev);
  }
  if (d_code != nullptr)
    kern::add_acc(d_code->data(), d_top.data(), net.d_code);
}

double kl_gaussian(const PosteriorGaussian& q, double sigma_z) {
  const std::size_t n = q.m_q.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sq = q.sigma_q[i];
    const double mq = q.m_q[i];
    s += 0.5 * (sq * sq + mq * mq) / (sigma_z * sigma_z) -
         (q.log_sigma_q[i] - std::log(sigma_z));
  }
  return s - 0.5 * static_cast<double>(n);
}

void reparam_sample(const PosteriorGaussian& q, std::size_t M, RngStream& rng,
                    nn::Mat& z, nn::Mat& eps) {
  const std::size_t n = q.m_q.size();
  z.resize(M, n);
  eps.resize(M, n);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < n; ++i) {
      const double e = rng.normal();
      eps(m, i) = e;
      z(m, i) = q.m_q[i] + q.sigma_q[i] * e;
    }
}

ViModel::ViModel(std::size_t d_, std::size_t n_u_, std::size_t n_z_,
                 std::size_t n_c_)
    : d(d_),
      n_u(n_u_),
      n_z(n_z_),
      n_c(n_c_),
      encoder(d_ + n_u_, d_, n_c_),
      posterior(2 * n_c_, n_z_),
      decoder(d_ + n_u_ + n_z_, d_, n_c_) {}

std::vector<nn::ParamView> prefixed(const std::string& prefix,
                                    std::vector<nn::ParamView> views) {
  for (auto& v : views) v.name = prefix + v.name;
  return views;
}

std::vector<nn::ConstParamView> prefixed(const std::string& prefix,
                                         std::vector<nn::ConstParamView> views) {
  for (auto& v : views) v.name = prefix + v.name;
  return views;
}

namespace {

template <typename V>
std::vector<V> concat(std::vector<V> a, std::vector<V> b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::vector<nn::ParamView> concat_views(std::vector<nn::ParamView> a,
                                        std::vector<nn::ParamView> b) {
  return concat(std::move(a), std::move(b));
}

std::vector<nn::ConstParamView> concat_views(
    std::vector<nn::ConstParamView> a, std::vector<nn::ConstParamView> b) {
  return concat(std::move(a), std::move(b));
}

std::vector<nn::ParamView> ViModel::trainable_params() {
  return concat(prefixed("post.", posterior.params()),
                prefixed("dec.", decoder.params()));
}

std::vector<nn::ConstParamView> ViModel::trainable_params() const {
  return concat(prefixed("post.", posterior.params()),
                prefixed("dec.", decoder.params()));
}

std::vector<nn::ParamView> ViModel::all_params() {
  return concat(prefixed("enc.", encoder.params()), trainable_params());
}

std::vector<nn::ConstParamView> ViModel::all_params() const {
  return concat(prefixed("enc.", encoder.params()), trainable_params());
}

}  // namespace vidyn::vi
