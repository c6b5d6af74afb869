#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/nn/tensor.hpp"
#include "vidyn/sim/forecast.hpp"
#include "vidyn/vi/model.hpp"

namespace vidyn::eval {

// Order statistic x_(max(1, ceil(p*n))) of the values, i.e. the inverse
// empirical CDF. Takes its argument by value because selection reorders it.
double empirical_quantile(std::vector<double> values, double p);

// ---------------------------------------------------------------------------
// One-step-ahead metrics.
// ---------------------------------------------------------------------------

// Predictions for one trajectory. Row r of mu/sigma is the predictive
// distribution for time r+1; y and phi hold the full series (one row more).
struct OnestepCase {
  nn::Mat mu;
  nn::Mat sigma;
  nn::Mat y;
  nn::Mat phi;
};

enum class LlDenominator { kVar, kStd };

struct OnestepMetrics {
  double e_mu = 0.0;
  double e_sigma = 0.0;
  double ll = 0.0;
  double nll = 0.0;
};

// Scores predictive means and spreads over the window that starts after the
// first `discard` predicted steps. sigma_eps is the observation noise level
// in the same (normalized) units as the data; it anchors the nll scale so a
// perfect model scores 1.
OnestepMetrics onestep_metrics(const std::vector<OnestepCase>& cases,
                               std::size_t discard, double sigma_eps,
                               LlDenominator denom = LlDenominator::kVar);

// Fraction of observations y(r+1, i) falling inside the central interval of
// the predictive mixture at level p, pooled over cases, steps past the
// discard window, and dimensions. preds[k] must predict cases aligned with
// y[k] (row r predicts row r+1 of y[k]).
double onestep_coverage(const std::vector<sim::MixturePrediction>& preds,
                        const std::vector<nn::Mat>& y, std::size_t discard,
                        double p);

// ---------------------------------------------------------------------------
// Closed-loop forecast metrics.
// ---------------------------------------------------------------------------

// Per-step ensemble statistics: the mean and the empirical quantiles at the
// requested levels. This is exactly what the forecast CSVs store, so metrics
// recomputed from disk match metrics computed in memory.
struct EnsembleSummary {
  std::size_t horizon = 0;
  std::size_t d = 0;
  nn::Mat mean;                  // horizon x d
  std::vector<double> levels;    // ascending
  std::vector<nn::Mat> quants;   // one horizon x d matrix per level
};

EnsembleSummary summarize_ensemble(const sim::ForecastEnsemble& ens,
                                   const std::vector<double>& levels);

// One evaluated forecast: the summary plus the truth it is scored against.
// The ensemble's step f predicts row t0 + 1 + f of y and phi.
struct ForecastCase {
  EnsembleSummary summary;
  nn::Mat y;
  nn::Mat phi;
  std::size_t t0 = 0;
};

struct ForecastMetrics {
  std::vector<double> nmae;                    // per step
  std::vector<double> w95;                     // per step
  std::vector<std::pair<double, double>> cp;   // (p, coverage)
};

// Normalized mean absolute error and 95% band width per forecast step,
// averaged over cases, plus empirical coverage of the observations at each
// requested level. Normalizers are the per-dimension standard deviations of
// phi over the whole trajectory. Every case must carry quantile levels
// covering 0.025/0.975 and (1 -/+ p)/2 for each requested p.
ForecastMetrics forecast_metrics(const std::vector<ForecastCase>& cases,
                                 const std::vector<double>& cp_levels);

// ---------------------------------------------------------------------------
// Latent-space analysis.
// ---------------------------------------------------------------------------

struct LatentReport {
  nn::Mat corr_zz;                      // n_z x n_z, unit diagonal
  std::vector<double> dkl;              // divergence from the unit prior, per dim
  std::vector<double> pca_eigs;         // descending, non-negative
  std::vector<double> zeta;             // cumulative explained variance
  nn::Mat corr_z_param;                 // n_z x n_param
  std::vector<std::string> param_names;
  bool rank_warning = false;
  std::vector<std::size_t> timestamps;
  nn::Mat m_points;                     // pooled posterior means, one row per
                                        // (trajectory, timestamp)
  nn::Mat param_points;                 // matching true parameters per row
};

// Five conditioning lengths evenly spaced across [start, T].
std::vector<std::size_t> default_timestamps(std::size_t T,
                                            std::size_t count = 5,
                                            std::size_t start = 200);

// Runs the encoder and posterior over trajectories [traj_begin, traj_end) of
// the dataset at each conditioning length, pools the posterior means for a
// principal-component spectrum, and pools draws_per_q reparameterised draws
// per posterior for the correlation matrices against the true parameters.
LatentReport latent_analysis(const vi::ViModel& model,
                             const dyngen::Dataset& ds,
                             std::size_t traj_begin, std::size_t traj_end,
                             const std::vector<std::size_t>& timestamps,
                             std::size_t draws_per_q, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Coupling-weight selection.
// ---------------------------------------------------------------------------

struct LambdaChoice {
  bool found = false;
  double lambda = 0.0;
  double max_offdiag = 0.0;                       // of the chosen weight
  std::vector<std::pair<double, double>> per_lambda;  // (lambda, max offdiag)
};

// Smallest coupling weight whose latent correlation matrix is within delta of
// the identity in max off-diagonal magnitude.
LambdaChoice lambda_selection(
    const std::vector<std::pair<double, nn::Mat>>& candidates,
    double delta = 0.1);

}  // namespace vidyn::eval
