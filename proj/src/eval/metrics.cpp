#include "vidyn/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>

#include "vidyn/common/error.hpp"
#include "vidyn/common/rng.hpp"
#include "vidyn/vi/train.hpp"

namespace vidyn::eval {

namespace {

double column_mean(const nn::Mat& m, std::size_t col) {
  double s = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) s += m(r, col);
  return s / static_cast<double>(m.rows);
}

double column_variance(const nn::Mat& m, std::size_t col) {
  const double mean = column_mean(m, col);
  double s = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double d = m(r, col) - mean;
    s += d * d;
  }
  return s / static_cast<double>(m.rows);
}

double pearson(const double* a, const double* b, std::size_t n,
               std::size_t stride_a, std::size_t stride_b) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i * stride_a];
    mb += b[i * stride_b];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i * stride_a] - ma;
    const double db = b[i * stride_b] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  const double denom = std::sqrt(saa * sbb);
  if (denom <= 0.0) return 0.0;
  return sab / denom;
}

void check_case(const OnestepCase& c, std::size_t discard, std::size_t idx) {
  if (c.mu.rows == 0 || c.mu.cols == 0)
    throw UsageError("one-step case " + std::to_string(idx) +
                     " has no predictions");
  if (c.sigma.rows != c.mu.rows || c.sigma.cols != c.mu.cols)
    throw ShapeError("one-step case " + std::to_string(idx) +
                     ": sigma shape does not match mu");
  if (c.y.rows != c.mu.rows + 1 || c.y.cols != c.mu.cols ||
      c.phi.rows != c.y.rows || c.phi.cols != c.y.cols)
    throw ShapeError("one-step case " + std::to_string(idx) +
                     ": series must have one more row than the predictions");
  if (discard >= c.mu.rows)
    throw UsageError("one-step case " + std::to_string(idx) +
                     ": evaluation window is empty after discarding " +
                     std::to_string(discard) + " steps");
}

// Population statistics of a column slice m(rows begin..end-1, col).
struct WindowStats {
  double mean = 0.0;
  double var = 0.0;
};

WindowStats window_stats(const nn::Mat& m, std::size_t begin, std::size_t end,
                         std::size_t col) {
  WindowStats w;
  const double n = static_cast<double>(end - begin);
  for (std::size_t r = begin; r < end; ++r) w.mean += m(r, col);
  w.mean /= n;
  for (std::size_t r = begin; r < end; ++r) {
    const double d = m(r, col) - w.mean;
    w.var += d * d;
  }
  w.var /= n;
  return w;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
std::vector<double> symmetric_eigenvalues(nn::Mat a) {
  const std::size_t n = a.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-28) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eigs(n);
  for (std::size_t i = 0; i < n; ++i) eigs[i] = a(i, i);
  return eigs;
}

struct ParamInfo {
  std::vector<std::string> names;
  std::vector<double> values;
};

ParamInfo trajectory_params(const dyngen::Trajectory& tr) {
  ParamInfo info;
  if (std::holds_alternative<dyngen::MgParams>(tr.params)) {
    const auto& p = std::get<dyngen::MgParams>(tr.params);
    info.names = {"alpha", "gamma", "tau"};
    info.values = {p.alpha, p.gamma, p.tau};
  } else {
    const auto& p = std::get<dyngen::VdpParams>(tr.params);
    info.names = {"gamma", "alpha", "theta"};
    info.values = {p.gamma, p.alpha, p.theta};
  }
  return info;
}

std::size_t find_level(const std::vector<double>& levels, double want) {
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (std::abs(levels[i] - want) < 1e-12) return i;
  throw UsageError("forecast summary is missing the quantile level " +
                   std::to_string(want));
}

}  // namespace

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  if (!(p > 0.0) || !(p <= 1.0))
    throw UsageError("quantile level must lie in (0, 1]");
  const double raw = std::ceil(p * static_cast<double>(values.size()));
  std::size_t rank = raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
  if (rank > values.size()) rank = values.size();
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

OnestepMetrics onestep_metrics(const std::vector<OnestepCase>& cases,
                               std::size_t discard, double sigma_eps,
                               LlDenominator denom) {
  if (cases.empty()) throw UsageError("no one-step cases to score");
  if (!(sigma_eps > 0.0))
    throw UsageError("observation noise level must be positive");

  double sum_mu_ratio = 0.0, sum_var_ratio = 0.0, sum_ll = 0.0;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto& c = cases[k];
    check_case(c, discard, k);
    const std::size_t begin = discard, end = c.mu.rows;
    const double n_steps = static_cast<double>(end - begin);
    double case_mu = 0.0, case_var = 0.0, case_ll = 0.0;
    for (std::size_t i = 0; i < c.mu.cols; ++i) {
      // Truth rows are shifted by one against prediction rows.
      WindowStats phi_w;
      {
        const double n = n_steps;
        for (std::size_t r = begin; r < end; ++r) phi_w.mean += c.phi(r + 1, i);
        phi_w.mean /= n;
        for (std::size_t r = begin; r < end; ++r) {
          const double d = c.phi(r + 1, i) - phi_w.mean;
          phi_w.var += d * d;
        }
        phi_w.var /= n;
      }
      if (!(phi_w.var > 0.0))
        throw NumericError("ground truth variance vanished in case " +
                           std::to_string(k));
      const WindowStats mu_w = window_stats(c.mu, begin, end, i);
      double mse = 0.0, ll = 0.0;
      for (std::size_t r = begin; r < end; ++r) {
        const double dm = c.mu(r, i) - c.phi(r + 1, i);
        mse += dm * dm;
        const double sig = c.sigma(r, i);
        if (!(sig > 0.0))
          throw NumericError("non-positive predictive spread in case " +
                             std::to_string(k));
        const double dy = c.mu(r, i) - c.y(r + 1, i);
        const double den =
            denom == LlDenominator::kVar ? sig * sig : sig;
        ll += -0.5 * dy * dy / den - std::log(sig);
      }
      case_mu += (mse / n_steps) / phi_w.var;
      case_var += mu_w.var / phi_w.var;
      case_ll += ll / n_steps;
    }
    const double dims = static_cast<double>(cases[k].mu.cols);
    sum_mu_ratio += case_mu / dims;
    sum_var_ratio += case_var / dims;
    sum_ll += case_ll / dims;
  }

  const double n_cases = static_cast<double>(cases.size());
  OnestepMetrics out;
  out.e_mu = std::sqrt(sum_mu_ratio / n_cases);
  out.e_sigma = std::sqrt(sum_var_ratio / n_cases) - 1.0;
  out.ll = sum_ll / n_cases;
  out.nll = out.ll / (-0.5 - std::log(sigma_eps));
  return out;
}

double onestep_coverage(const std::vector<sim::MixturePrediction>& preds,
                        const std::vector<nn::Mat>& y, std::size_t discard,
                        double p) {
  if (preds.size() != y.size() || preds.empty())
    throw UsageError("predictions and observations must pair up");
  if (!(p > 0.0) || !(p < 1.0))
    throw UsageError("coverage level must lie in (0, 1)");
  const double lo_q = 0.5 * (1.0 - p), hi_q = 0.5 * (1.0 + p);

  std::size_t inside = 0, total = 0;
  std::vector<double> mus, sigmas;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const auto& pr = preds[k];
    const std::size_t M = pr.comp_mu.size();
    if (M == 0) throw UsageError("prediction has no mixture components");
    if (y[k].rows != pr.mu.rows + 1 || y[k].cols != pr.mu.cols)
      throw ShapeError("observations do not match the prediction shape");
    if (discard >= pr.mu.rows)
      throw UsageError("evaluation window is empty after the discard");
    mus.resize(M);
    sigmas.resize(M);
    for (std::size_t r = discard; r < pr.mu.rows; ++r) {
      for (std::size_t i = 0; i < pr.mu.cols; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
          mus[m] = pr.comp_mu[m](r, i);
          sigmas[m] = pr.comp_sigma[m](r, i);
        }
        const double lo = sim::mixture_quantile(mus.data(), sigmas.data(), M,
                                                lo_q);
        const double hi = sim::mixture_quantile(mus.data(), sigmas.data(), M,
                                                hi_q);
        const double obs = y[k](r + 1, i);
        if (obs >= lo && obs <= hi) ++inside;
        ++total;
      }
    }
  }
  return static_cast<double>(inside) / static_cast<double>(total);
}

EnsembleSummary summarize_ensemble(const sim::ForecastEnsemble& ens,
                                   const std::vector<double>& levels) {
  if (!ens.complete)
    throw UsageError("cannot summarize an incomplete ensemble");
  if (ens.n_s == 0 || ens.horizon == 0)
    throw UsageError("cannot summarize an empty ensemble");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0) || !(levels[i] < 1.0))
      throw UsageError("quantile levels must lie in (0, 1)");
    if (i > 0 && levels[i] <= levels[i - 1])
      throw UsageError("quantile levels must be strictly ascending");
  }

  EnsembleSummary out;
  out.horizon = ens.horizon;
  out.d = ens.d;
  out.levels = levels;
  out.mean.resize(ens.horizon, ens.d);
  out.quants.assign(levels.size(), nn::Mat(ens.horizon, ens.d));

  std::vector<double> draws(ens.n_s);
  for (std::size_t f = 0; f < ens.horizon; ++f) {
    for (std::size_t i = 0; i < ens.d; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < ens.n_s; ++j) {
        draws[j] = ens.samples[j](f, i);
        sum += draws[j];
      }
      out.mean(f, i) = sum / static_cast<double>(ens.n_s);
      for (std::size_t l = 0; l < levels.size(); ++l)
        out.quants[l](f, i) = empirical_quantile(draws, levels[l]);
    }
  }
  return out;
}

ForecastMetrics forecast_metrics(const std::vector<ForecastCase>& cases,
                                 const std::vector<double>& cp_levels) {
  if (cases.empty()) throw UsageError("no forecast cases to score");
  const std::size_t horizon = cases[0].summary.horizon;
  const std::size_t d = cases[0].summary.d;
  if (horizon == 0 || d == 0) throw UsageError("empty forecast summary");

  ForecastMetrics out;
  out.nmae.assign(horizon, 0.0);
  out.w95.assign(horizon, 0.0);
  std::vector<std::size_t> inside(cp_levels.size(), 0);
  std::size_t total = 0;

  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto& c = cases[k];
    if (c.summary.horizon != horizon || c.summary.d != d)
      throw ShapeError("forecast summaries disagree on shape");
    if (c.phi.rows != c.y.rows || c.phi.cols != d || c.y.cols != d)
      throw ShapeError("forecast truth series have inconsistent shapes");
    if (c.t0 + horizon >= c.phi.rows)
      throw UsageError("forecast case " + std::to_string(k) +
                       " extends past the end of its trajectory");

    std::vector<double> phi_std(d);
    for (std::size_t i = 0; i < d; ++i) {
      phi_std[i] = std::sqrt(column_variance(c.phi, i));
      if (!(phi_std[i] > 0.0))
        throw NumericError("ground truth variance vanished in case " +
                           std::to_string(k));
    }

    const std::size_t lo95 = find_level(c.summary.levels, 0.025);
    const std::size_t hi95 = find_level(c.summary.levels, 0.975);
    std::vector<std::size_t> lo_idx(cp_levels.size()), hi_idx(cp_levels.size());
    for (std::size_t l = 0; l < cp_levels.size(); ++l) {
      const double p = cp_levels[l];
      if (!(p > 0.0) || !(p < 1.0))
        throw UsageError("coverage level must lie in (0, 1)");
      lo_idx[l] = find_level(c.summary.levels, 0.5 * (1.0 - p));
      hi_idx[l] = find_level(c.summary.levels, 0.5 * (1.0 + p));
    }

    for (std::size_t f = 0; f < horizon; ++f) {
      double nmae_f = 0.0, w_f = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t row = c.t0 + 1 + f;
        nmae_f += std::abs(c.summary.mean(f, i) - c.phi(row, i)) / phi_std[i];
        w_f += (c.summary.quants[hi95](f, i) - c.summary.quants[lo95](f, i)) /
               phi_std[i];
        for (std::size_t l = 0; l < cp_levels.size(); ++l) {
          const double obs = c.y(row, i);
          if (obs >= c.summary.quants[lo_idx[l]](f, i) &&
              obs <= c.summary.quants[hi_idx[l]](f, i))
            ++inside[l];
        }
        ++total;
      }
      out.nmae[f] += nmae_f / static_cast<double>(d);
      out.w95[f] += w_f / static_cast<double>(d);
    }
  }

  const double n_cases = static_cast<double>(cases.size());
  for (std::size_t f = 0; f < horizon; ++f) {
    out.nmae[f] /= n_cases;
    out.w95[f] /= n_cases;
  }
  out.cp.reserve(cp_levels.size());
  for (std::size_t l = 0; l < cp_levels.size(); ++l)
    out.cp.emplace_back(cp_levels[l],
                        static_cast<double>(inside[l]) /
                            static_cast<double>(total));
  return out;
}

std::vector<std::size_t> default_timestamps(std::size_t T, std::size_t count,
                                            std::size_t start) {
  if (count == 0) throw UsageError("need at least one timestamp");
  if (start > T) throw UsageError("timestamp window starts past the series");
  std::vector<std::size_t> out(count);
  if (count == 1) {
    out[0] = T;
    return out;
  }
  const double span = static_cast<double>(T - start);
  for (std::size_t j = 0; j < count; ++j)
    out[j] = start + static_cast<std::size_t>(
                         std::llround(span * static_cast<double>(j) /
                                      static_cast<double>(count - 1)));
  return out;
}

LatentReport latent_analysis(const vi::ViModel& model,
                             const dyngen::Dataset& ds,
                             std::size_t traj_begin, std::size_t traj_end,
                             const std::vector<std::size_t>& timestamps,
                             std::size_t draws_per_q, std::uint64_t seed) {
  if (model.n_z == 0) throw UsageError("model has no latent dimensions");
  if (traj_begin >= traj_end || traj_end > ds.trajectories.size())
    throw UsageError("bad trajectory range for the latent analysis");
  if (timestamps.empty()) throw UsageError("need at least one timestamp");
  if (draws_per_q == 0) throw UsageError("need at least one posterior draw");
  for (const std::size_t ts : timestamps)
    if (ts < 1 || ts > ds.T())
      throw UsageError("timestamp " + std::to_string(ts) +
                       " lies outside the series");

  const std::size_t n_z = model.n_z;
  const std::size_t n_traj = traj_end - traj_begin;
  const std::size_t n_pairs = n_traj * timestamps.size();
  const ParamInfo first = trajectory_params(ds.trajectories[traj_begin]);
  const std::size_t n_param = first.values.size();

  LatentReport rep;
  rep.param_names = first.names;
  rep.timestamps = timestamps;
  rep.m_points.resize(n_pairs, n_z);
  rep.param_points.resize(n_pairs, n_param);
  rep.dkl.assign(n_z, 0.0);

  nn::Mat draws(n_pairs * draws_per_q, n_z);
  nn::Mat draw_params(n_pairs * draws_per_q, n_param);
  nn::Mat xs, z_block, eps_block;

  for (std::size_t k = 0; k < n_traj; ++k) {
    const auto& tr = ds.trajectories[traj_begin + k];
    const ParamInfo pi = trajectory_params(tr);
    for (std::size_t j = 0; j < timestamps.size(); ++j) {
      const std::size_t pair = k * timestamps.size() + j;
      vi::fill_inputs(tr, 0, timestamps[j] + 1, nullptr, 0, xs);
      const vi::PosteriorGaussian q =
          sim::infer_posterior(model.encoder, model.posterior, xs);
      for (std::size_t i = 0; i < n_z; ++i) {
        rep.m_points(pair, i) = q.m_q[i];
        rep.dkl[i] += 0.5 * (q.sigma_q[i] * q.sigma_q[i] + q.m_q[i] * q.m_q[i]) -
                      q.log_sigma_q[i] - 0.5;
      }
      for (std::size_t p = 0; p < n_param; ++p)
        rep.param_points(pair, p) = pi.values[p];
      auto rng = make_stream(seed, RngDomain::kLatent, pair);
      vi::reparam_sample(q, draws_per_q, rng, z_block, eps_block);
      for (std::size_t r = 0; r < draws_per_q; ++r) {
        const std::size_t row = pair * draws_per_q + r;
        for (std::size_t i = 0; i < n_z; ++i) draws(row, i) = z_block(r, i);
        for (std::size_t p = 0; p < n_param; ++p)
          draw_params(row, p) = pi.values[p];
      }
    }
  }

  for (std::size_t i = 0; i < n_z; ++i)
    rep.dkl[i] /= static_cast<double>(n_pairs);
  rep.rank_warning = n_pairs < n_z;

  // Correlations over the pooled draws.
  rep.corr_zz.resize(n_z, n_z);
  for (std::size_t i = 0; i < n_z; ++i) {
    rep.corr_zz(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n_z; ++j) {
      const double c = pearson(&draws(0, i), &draws(0, j), draws.rows,
                               draws.cols, draws.cols);
      rep.corr_zz(i, j) = c;
      rep.corr_zz(j, i) = c;
    }
  }
  rep.corr_z_param.resize(n_z, n_param);
  for (std::size_t i = 0; i < n_z; ++i)
    for (std::size_t p = 0; p < n_param; ++p)
      rep.corr_z_param(i, p) =
          pearson(&draws(0, i), &draw_params(0, p), draws.rows, draws.cols,
                  draw_params.cols);

  // Principal-component spectrum of the pooled posterior means.
  nn::Mat cov(n_z, n_z);
  std::vector<double> mean(n_z, 0.0);
  for (std::size_t r = 0; r < n_pairs; ++r)
    for (std::size_t i = 0; i < n_z; ++i) mean[i] += rep.m_points(r, i);
  for (std::size_t i = 0; i < n_z; ++i) mean[i] /= static_cast<double>(n_pairs);
  for (std::size_t r = 0; r < n_pairs; ++r)
    for (std::size_t i = 0; i < n_z; ++i)
      for (std::size_t j = 0; j < n_z; ++j)
        cov(i, j) += (rep.m_points(r, i) - mean[i]) *
                     (rep.m_points(r, j) - mean[j]);
  for (std::size_t i = 0; i < n_z; ++i)
    for (std::size_t j = 0; j < n_z; ++j)
      cov(i, j) /= static_cast<double>(n_pairs);

  rep.pca_eigs = symmetric_eigenvalues(cov);
  for (double& e : rep.pca_eigs) e = std::max(e, 0.0);
  std::sort(rep.pca_eigs.begin(), rep.pca_eigs.end(), std::greater<>());

  double tot = 0.0;
  for (const double e : rep.pca_eigs) tot += e;
  rep.zeta.resize(n_z);
  if (tot > 0.0) {
    double run = 0.0;
    for (std::size_t i = 0; i < n_z; ++i) {
      run += rep.pca_eigs[i];
      rep.zeta[i] = run / tot;
    }
  } else {
    for (std::size_t i = 0; i < n_z; ++i)
      rep.zeta[i] = static_cast<double>(i + 1) / static_cast<double>(n_z);
  }
  rep.zeta.back() = 1.0;
  return rep;
}

LambdaChoice lambda_selection(
    const std::vector<std::pair<double, nn::Mat>>& candidates, double delta) {
  if (candidates.empty())
    throw UsageError("coupling-weight selection needs at least one candidate");
  if (!(delta > 0.0)) throw UsageError("selection threshold must be positive");

  std::vector<std::pair<double, double>> scored;
  scored.reserve(candidates.size());
  for (const auto& [lambda, corr] : candidates) {
    if (corr.rows != corr.cols || corr.rows == 0)
      throw ShapeError("correlation matrix must be square");
    double worst = 0.0;
    for (std::size_t i = 0; i < corr.rows; ++i)
      for (std::size_t j = 0; j < corr.cols; ++j)
        if (i != j) worst = std::max(worst, std::abs(corr(i, j)));
    scored.emplace_back(lambda, worst);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  LambdaChoice out;
  out.per_lambda = scored;
  double best_seen = scored.front().second;
  for (const auto& [lambda, worst] : scored) {
    best_seen = std::min(best_seen, worst);
    if (!out.found && worst < delta) {
      out.found = true;
      out.lambda = lambda;
      out.max_offdiag = worst;
    }
  }
  if (!out.found) out.max_offdiag = best_seen;
  return out;
}

}  // namespace vidyn::eval
