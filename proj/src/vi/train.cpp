#include "vidyn/vi/train.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "vidyn/common/error.hpp"
#include "vidyn/common/parallel.hpp"
#include "vidyn/common/rng.hpp"
#include "vidyn/kern/kernels.hpp"
#include "vidyn/nn/layers.hpp"

namespace vidyn::vi {

namespace {

std::size_t forcing_cols(const dyngen::Trajectory& tr) {
  return tr.u.rows > 0 ? tr.u.cols : 0;
}

void add_views(const std::vector<nn::ParamView>& dst,
               const std::vector<nn::ParamView>& src) {
  for (std::size_t k = 0; k < dst.size(); ++k)
    kern::add_acc(dst[k].data, src[k].data, dst[k].size);
}

void scale_views(const std::vector<nn::ParamView>& views, double c) {
  for (const auto& v : views) kern::scale(v.data, c, v.size);
}

std::vector<double> snapshot_params(const std::vector<nn::ParamView>& views) {
  std::vector<double> flat;
  for (const auto& v : views) flat.insert(flat.end(), v.data, v.data + v.size);
  return flat;
}

void restore_params(const std::vector<nn::ParamView>& views,
                    const std::vector<double>& flat) {
  std::size_t off = 0;
  for (const auto& v : views) {
    std::memcpy(v.data, flat.data() + off, sizeof(double) * v.size);
    off += v.size;
  }
}

void check_dataset(const dyngen::Dataset& ds, const TrainConfig& cfg) {
  if (ds.trajectories.empty()) throw UsageError("training needs a dataset");
  if (ds.train_count == 0 || ds.val_count == 0)
    throw UsageError("training needs both train and validation trajectories");
  if (ds.train_count + ds.val_count > ds.K())
    throw UsageError("train/val split exceeds the dataset size");
  if (cfg.seq_len == 0 || cfg.seq_len > ds.T())
    throw UsageError("seq_len " + std::to_string(cfg.seq_len) +
                     " does not fit trajectories of " + std::to_string(ds.T()) +
                     " steps");
  if (cfg.batch == 0) throw UsageError("batch must be at least 1");
  if (cfg.iters == 0) throw UsageError("iters must be at least 1");
  if (cfg.val_windows == 0)
    throw UsageError("val_windows must be at least 1");
}

std::vector<Window> fixed_val_windows(const dyngen::Dataset& ds,
                                      const TrainConfig& cfg) {
  auto rng = make_stream(cfg.seed, RngDomain::kValWindows, 0);
  std::vector<Window> ws(cfg.val_windows);
  const std::size_t starts = ds.T() - cfg.seq_len + 1;
  for (auto& w : ws) {
    w.traj = ds.train_count + rng.index(ds.val_count);
    w.start = rng.index(starts);
  }
  return ws;
}

}  // namespace

void fill_inputs(const dyngen::Trajectory& tr, std::size_t start, std::size_t T,
                 const double* z, std::size_t n_z, nn::Mat& x) {
  if (start + T > tr.y.rows)
    throw UsageError("input window [" + std::to_string(start) + ", " +
                     std::to_string(start + T) + ") exceeds the trajectory");
  const std::size_t d = tr.y.cols;
  const std::size_t n_u = forcing_cols(tr);
  x.resize(T, d + n_u + n_z);
  for (std::size_t t = 0; t < T; ++t) {
    double* row = x.row(t);
    std::memcpy(row, tr.y.row(start + t), sizeof(double) * d);
    if (n_u > 0)
      std::memcpy(row + d, tr.u.row(start + t), sizeof(double) * n_u);
    if (n_z > 0) std::memcpy(row + d + n_u, z, sizeof(double) * n_z);
  }
}

double sequence_nll(const nn::RnnModel& model, const dyngen::Trajectory& tr,
                    Window w, std::size_t T, const double* z, std::size_t n_z,
                    double adj_scale, SeqScratch& s, nn::RnnModel* grad,
                    nn::Mat* dx) {
  if (T == 0) throw UsageError("sequence_nll: empty window");
  if (w.start + T >= tr.y.rows)
    throw UsageError("sequence_nll: window needs rows up to " +
                     std::to_string(w.start + T) + " but the trajectory has " +
                     std::to_string(tr.y.rows));
  fill_inputs(tr, w.start, T, z, n_z, s.x);
  nn::RnnState s0(model.n_c);
  rnn_forward(model, s.x, s0, s.tape);

  const std::size_t d = model.d_out;
  s.d_mu.resize(T, d);
  s.d_ls.resize(T, d);
  double nll = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double* target = tr.y.row(w.start + t + 1);
    for (std::size_t i = 0; i < d; ++i) {
      const double ls = nn::clamp_log_sigma(s.tape.log_sigma_raw(t, i));
      const double sig = std::exp(ls);
      const double resid = target[i] - s.tape.mu(t, i);
      const double rs = resid / sig;
      nll += 0.5 * rs * rs + ls;
      s.d_mu(t, i) = adj_scale * (-resid / (sig * sig));
      s.d_ls(t, i) = adj_scale * (1.0 - rs * rs);
    }
  }
  if (grad != nullptr) {
    s.ws.resize(model.n_c);
    if (dx != nullptr) dx->resize(T, model.d_in);
    rnn_backward(model, s.tape, s.d_mu, s.d_ls, *grad, dx, s.ws);
  }
  return nll;
}

TrainResult train_rnn(nn::RnnModel& model, const dyngen::Dataset& ds,
                      const TrainConfig& cfg) {
  check_dataset(ds, cfg);
  auto init_rng = make_stream(cfg.seed, RngDomain::kInit, 0);
  model.init_params(init_rng);

  auto sample = make_stream(cfg.seed, RngDomain::kTrainSample, 0);
  const auto val_ws = fixed_val_windows(ds, cfg);
  const std::size_t starts = ds.T() - cfg.seq_len + 1;

  const optim::LrSchedule sched{cfg.lr_min, cfg.lr_max, cfg.iters};
  auto param_views = model.params();
  nn::RnnModel grad(model.d_in, model.d_out, model.n_c);
  auto grad_views = grad.params();
  optim::AdamState adam_state;

  std::vector<Window> batch_ws(cfg.batch);
  std::vector<SeqScratch> slots(cfg.batch);
  std::vector<nn::RnnModel> slot_grads(
      cfg.batch, nn::RnnModel(model.d_in, model.d_out, model.n_c));
  std::vector<std::vector<nn::ParamView>> slot_views;
  for (auto& g : slot_grads) slot_views.push_back(g.params());
  std::vector<double> slot_nll(cfg.batch, 0.0);

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best;
  SeqScratch val_scratch;

  for (std::size_t l = 0; l < cfg.iters; ++l) {
    for (auto& w : batch_ws) {
      w.traj = sample.index(ds.train_count);
      w.start = sample.index(starts);
    }
    parallel_for(cfg.batch, cfg.threads, [&](std::size_t b) {
      slot_grads[b].zero_all();
      slot_nll[b] =
          sequence_nll(model, ds.trajectories[batch_ws[b].traj], batch_ws[b],
                       cfg.seq_len, nullptr, 0, 1.0, slots[b], &slot_grads[b],
                       nullptr);
    });
    grad.zero_all();
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      loss += slot_nll[b];
      add_views(grad_views, slot_views[b]);
    }
    loss /= static_cast<double>(cfg.batch);
    scale_views(grad_views, 1.0 / static_cast<double>(cfg.batch));
    if (!std::isfinite(loss))
      throw TrainingFailure("training loss became non-finite",
                            static_cast<long>(l + 1));

    const double lr = optim::cosine_lr(l, sched);
    try {
      optim::adam_step(param_views, grad_views, adam_state, lr, cfg.adam);
    } catch (const PoisonedGradient& e) {
      throw TrainingFailure(std::string("gradient check failed: ") + e.what(),
                            static_cast<long>(l + 1));
    }

    if ((l + 1) % cfg.val_every == 0 || l + 1 == cfg.iters) {
      double val = 0.0;
      for (const auto& w : val_ws)
        val += sequence_nll(model, ds.trajectories[w.traj], w, cfg.seq_len,
                            nullptr, 0, 1.0, val_scratch, nullptr, nullptr);
      val /= static_cast<double>(val_ws.size());
      if (val < res.best_val_loss) {
        res.best_val_loss = val;
        res.best_iteration = l + 1;
        best = snapshot_params(param_views);
      }
      res.log.push_back({l + 1, lr, loss, 0.0, loss, val});
    }
  }
  restore_params(param_views, best);
  return res;
}

ViWindowStats vi_window_pass(const ViModel& model, const dyngen::Trajectory& tr,
                             Window w, const TrainConfig& cfg,
                             const nn::Mat& eps, ViGrads* grads, ViScratch& s) {
  const std::size_t Tw = cfg.seq_len;
  if (Tw == 0) throw UsageError("vi_window_pass: empty window");
  if (w.start + Tw >= tr.y.rows)
    throw UsageError("vi_window_pass: window needs rows up to " +
                     std::to_string(w.start + Tw) + " but the trajectory has " +
                     std::to_string(tr.y.rows));
  if (eps.cols != model.n_z)
    throw ShapeError("vi_window_pass: eps has " + std::to_string(eps.cols) +
                     " columns for " + std::to_string(model.n_z) + " latents");
  const std::size_t M = eps.rows;
  if (M == 0) throw UsageError("vi_window_pass: needs at least one sample");
  const std::size_t n_z = model.n_z;
  const std::size_t n_c = model.n_c;

  fill_inputs(tr, w.start, Tw + 1, nullptr, 0, s.x_enc);
  nn::RnnState enc_state(n_c);
  s.enc_ws.resize(n_c);
  for (std::size_t t = 0; t < Tw + 1; ++t)
    rnn_step_state(model.encoder, s.x_enc.row(t), enc_state, s.enc_ws);
  nn::Vec code(2 * n_c);
  std::memcpy(code.data(), enc_state.h1.data(), sizeof(double) * n_c);
  std::memcpy(code.data() + n_c, enc_state.h2.data(), sizeof(double) * n_c);

  posterior_forward(model.posterior, code, s.post_tape, s.q);

  s.z.resize(M, n_z);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < n_z; ++i)
      s.z(m, i) = s.q.m_q[i] + s.q.sigma_q[i] * eps(m, i);

  if (s.dec.size() != M) s.dec.assign(M, SeqScratch{});
  if (grads != nullptr &&
      (s.dec_gs.size() != M || s.dec_gs.front().d_in != model.decoder.d_in ||
       s.dec_gs.front().n_c != model.decoder.n_c))
    s.dec_gs.assign(M, nn::RnnModel(model.decoder.d_in, model.decoder.d_out,
                                    model.decoder.n_c));

  const std::size_t z_off = tr.y.cols + forcing_cols(tr);
  const double inv_m = 1.0 / static_cast<double>(M);
  std::vector<double> nll(M, 0.0);
  s.dz.resize(M, n_z);
  parallel_for(M, cfg.threads, [&](std::size_t m) {
    nn::RnnModel* g = nullptr;
    nn::Mat* dxp = nullptr;
    if (grads != nullptr) {
      s.dec_gs[m].zero_all();
      g = &s.dec_gs[m];
      dxp = &s.dec[m].dx;
    }
    nll[m] = sequence_nll(model.decoder, tr, w, Tw, s.z.row(m), n_z, inv_m,
                          s.dec[m], g, dxp);
    if (grads != nullptr) {
      for (std::size_t i = 0; i < n_z; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < Tw; ++t) acc += s.dec[m].dx(t, z_off + i);
        s.dz(m, i) = acc;
      }
    }
  });

  ViWindowStats out;
  for (std::size_t m = 0; m < M; ++m) out.l_y += nll[m];
  out.l_y *= inv_m;
  out.l_q = kl_gaussian(s.q, cfg.sigma_z);

  if (grads != nullptr) {
    auto dst = grads->dec.params();
    for (std::size_t m = 0; m < M; ++m) add_views(dst, s.dec_gs[m].params());

    s.dz_sum.assign(n_z, 0.0);
    s.dz_eps.assign(n_z, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t i = 0; i < n_z; ++i) {
        s.dz_sum[i] += s.dz(m, i);
        s.dz_eps[i] += eps(m, i) * s.dz(m, i);
      }
    s.d_m.assign(n_z, 0.0);
    s.d_ls.assign(n_z, 0.0);
    const double var_z = cfg.sigma_z * cfg.sigma_z;
    for (std::size_t i = 0; i < n_z; ++i) {
      const double sq = s.q.sigma_q[i];
      s.d_m[i] = cfg.lambda * s.q.m_q[i] / var_z + s.dz_sum[i];
      s.d_ls[i] = cfg.lambda * (sq * sq / var_z - 1.0) + sq * s.dz_eps[i];
    }
    posterior_backward(model.posterior, s.post_tape, s.d_m, s.d_ls,
                       grads->post, nullptr);
  }
  return out;
}

TrainResult train_vi(ViModel& model, const dyngen::Dataset& ds,
                     const TrainConfig& cfg) {
  check_dataset(ds, cfg);
  if (cfg.M == 0) throw UsageError("M must be at least 1");

  auto init_rng = make_stream(cfg.seed, RngDomain::kInit, 1);
  model.posterior.init_params(init_rng);
  model.decoder.init_params(init_rng);

  auto sample = make_stream(cfg.seed, RngDomain::kTrainSample, 0);
  auto eps_rng = make_stream(cfg.seed, RngDomain::kTrainEps, 0);
  const auto val_ws = fixed_val_windows(ds, cfg);
  const std::size_t starts = ds.T() - cfg.seq_len + 1;

  const optim::LrSchedule sched{cfg.lr_min, cfg.lr_max, cfg.iters};
  auto param_views = model.trainable_params();
  ViGrads grads(model);
  auto grad_views = grads.params();
  optim::AdamState adam_state;

  ViScratch scratch;
  nn::Mat eps;
  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best;

  for (std::size_t l = 0; l < cfg.iters; ++l) {
    grads.zero_all();
    double sum_q = 0.0, sum_y = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      Window w;
      w.traj = sample.index(ds.train_count);
      w.start = sample.index(starts);
      eps.resize(cfg.M, model.n_z);
      for (std::size_t m = 0; m < cfg.M; ++m)
        for (std::size_t i = 0; i < model.n_z; ++i)
          eps(m, i) = eps_rng.normal();
      const auto stats = vi_window_pass(model, ds.trajectories[w.traj], w, cfg,
                                        eps, &grads, scratch);
      sum_q += stats.l_q;
      sum_y += stats.l_y;
    }
    const double l_q = sum_q / static_cast<double>(cfg.batch);
    const double l_y = sum_y / static_cast<double>(cfg.batch);
    const double loss = cfg.lambda * l_q + l_y;
    scale_views(grad_views, 1.0 / static_cast<double>(cfg.batch));
    if (!std::isfinite(loss))
      throw TrainingFailure("training loss became non-finite",
                            static_cast<long>(l + 1));

    const double lr = optim::cosine_lr(l, sched);
    try {
      optim::adam_step(param_views, grad_views, adam_state, lr, cfg.adam);
    } catch (const PoisonedGradient& e) {
      throw TrainingFailure(std::string("gradient check failed: ") + e.what(),
                            static_cast<long>(l + 1));
    }

    if ((l + 1) % cfg.val_every == 0 || l + 1 == cfg.iters) {
      double val = 0.0;
      for (std::size_t j = 0; j < val_ws.size(); ++j) {
        auto val_eps_rng = make_stream(cfg.seed, RngDomain::kValEps, j);
        eps.resize(cfg.M, model.n_z);
        for (std::size_t m = 0; m < cfg.M; ++m)
          for (std::size_t i = 0; i < model.n_z; ++i)
            eps(m, i) = val_eps_rng.normal();
        const auto stats =
            vi_window_pass(model, ds.trajectories[val_ws[j].traj], val_ws[j],
                           cfg, eps, nullptr, scratch);
        val += cfg.lambda * stats.l_q + stats.l_y;
      }
      val /= static_cast<double>(val_ws.size());
      if (val < res.best_val_loss) {
        res.best_val_loss = val;
        res.best_iteration = l + 1;
        best = snapshot_params(param_views);
      }
      res.log.push_back({l + 1, lr, loss, l_q, l_y, val});
    }
  }
  restore_params(param_views, best);
  return res;
}

}  // namespace vidyn::vi
