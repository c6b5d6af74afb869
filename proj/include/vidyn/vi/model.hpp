#pragma once

#include <string>
#include <vector>

#include "vidyn/common/rng.hpp"
#include "vidyn/nn/rnn.hpp"

namespace vidyn::vi {

// Diagonal Gaussian over the latent variable z.
struct PosteriorGaussian {
  nn::Vec m_q;
  nn::Vec sigma_q;
  nn::Vec log_sigma_q;  // clamped, so sigma_q = exp(log_sigma_q) is bounded
};

// Feedforward map from an encoder code to the posterior Gaussian: a stack of
// ReLU layers at the code width, then two linear heads for the mean and the
// log standard deviation. The log-sigma head is clamped like every Gaussian
// head in the model family.
struct PosteriorNet {
  std::size_t d_code = 0;
  std::size_t n_z = 0;
  std::vector<nn::Linear> hidden;  // d_code -> d_code each
  nn::Linear m_head;               // n_z x d_code
  nn::Linear s_head;               // n_z x d_code

  PosteriorNet() = default;
  PosteriorNet(std::size_t d_code_, std::size_t n_z_,
               std::size_t n_layers = 3);

  void init_params(RngStream& rng);
  void zero_all();
  std::size_t param_count() const;
  std::vector<nn::ParamView> params();
  std::vector<nn::ConstParamView> params() const;
};

// Forward activations kept for the reverse pass.
struct PosteriorTape {
  nn::Vec v0;
  std::vector<nn::Vec> pre, act;  // one entry per hidden layer
  nn::Vec m_raw, log_sigma_raw;
};

void posterior_forward(const PosteriorNet& net, const nn::Vec& code,
                       PosteriorTape& tape, PosteriorGaussian& q);

// d_m and d_log_sigma are adjoints of (m_q, clamped log sigma_q); the clamp's
// dead zones are applied internally from the recorded raw values. Accumulates
// parameter gradients into grad; d_code may be null.
void posterior_backward(const PosteriorNet& net, const PosteriorTape& tape,
                        const nn::Vec& d_m, const nn::Vec& d_log_sigma,
                        PosteriorNet& grad, nn::Vec* d_code);

// Closed-form divergence of q from the isotropic zero-mean prior with
// standard deviation sigma_z:
//   sum_i [ (sigma_q_i^2 + m_q_i^2) / (2 sigma_z^2) - log(sigma_q_i/sigma_z) ]
//   - n_z / 2.
double kl_gaussian(const PosteriorGaussian& q, double sigma_z);

// z^m = m_q + sigma_q .* eps^m with eps^m ~ N(0, I). Both outputs are M x n_z;
// draws are row-major (sample-major) so consumption order is fixed. The eps
// draws are retained for the pathwise gradient.
void reparam_sample(const PosteriorGaussian& q, std::size_t M, RngStream& rng,
                    nn::Mat& z, nn::Mat& eps);

// The model triple. The encoder consumes y||u and its final two-level state
// (h1, h2) concatenates into the code of width 2*n_c; the posterior maps the
// code to q(z); the decoder consumes y||u||z.
struct ViModel {
  std::size_t d = 0, n_u = 0, n_z = 0, n_c = 0;
  nn::RnnModel encoder;
  PosteriorNet posterior;
  nn::RnnModel decoder;

  ViModel() = default;
  ViModel(std::size_t d_, std::size_t n_u_, std::size_t n_z_, std::size_t n_c_);

  // The trainable half (posterior + decoder); the encoder stays frozen.
  std::vector<nn::ParamView> trainable_params();
  std::vector<nn::ConstParamView> trainable_params() const;
  // Full layout for checkpoints: enc.* then post.* then dec.*.
  std::vector<nn::ParamView> all_params();
  std::vector<nn::ConstParamView> all_params() const;
};

std::vector<nn::ParamView> prefixed(const std::string& prefix,
                                    std::vector<nn::ParamView> views);
std::vector<nn::ConstParamView> prefixed(const std::string& prefix,
                                         std::vector<nn::ConstParamView> views);
std::vector<nn::ParamView> concat_views(std::vector<nn::ParamView> a,
                                        std::vector<nn::ParamView> b);
std::vector<nn::ConstParamView> concat_views(
    std::vector<nn::ConstParamView> a, std::vector<nn::ConstParamView> b);

}  // namespace vidyn::vi
