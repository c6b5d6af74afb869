#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <utility>

#include "vidyn/common/error.hpp"
#include "vidyn/dyngen/dataset.hpp"
#include "vidyn/eval/metrics.hpp"
#include "vidyn/io/checkpoint.hpp"
#include "vidyn/io/csv.hpp"
#include "vidyn/io/dataset_io.hpp"
#include "vidyn/sim/forecast.hpp"
#include "vidyn/vi/model.hpp"

namespace vidyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Quantile levels stored in every forecast summary CSV: the 95% band plus the
// central intervals for p in {0.6, 0.8, 0.9, 0.95}.
const std::vector<double> kSummaryLevels = {0.025, 0.05, 0.1,  0.2,
                                            0.8,   0.9,  0.95, 0.975};
// Central interval levels written beside one-step predictions.
const std::vector<double> kOnestepPs = {0.6, 0.7, 0.8, 0.9, 0.95};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
}

void write_json_file(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + file.string());
}

json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(file.string() + " is not valid JSON: " + e.what());
  }
}

std::pair<std::size_t, std::size_t> split_range(const dyngen::Dataset& ds,
                                                const std::string& split,
                                                std::size_t trajs) {
  std::size_t begin = 0, end = 0;
  if (split == "train") {
    begin = 0;
    end = ds.train_count;
  } else if (split == "val" || split == "test") {
    begin = ds.train_count;
    end = ds.train_count + ds.val_count;
  } else {
    throw UsageError("unknown split '" + split + "' (use train or val)");
  }
  if (trajs > 0) end = std::min(end, begin + trajs);
  if (begin >= end) throw UsageError("split '" + split + "' is empty");
  return {begin, end};
}

double normalized_sigma_eps(const dyngen::Dataset& ds) {
  if (ds.norm.y_min.empty())
    throw UsageError("dataset carries no normalization stats");
  const double span = ds.norm.y_max[0] - ds.norm.y_min[0];
  return ds.sigma_eps / span;
}

json norm_stats_json(const dyngen::NormStats& n) {
  return json{{"y_min", n.y_min},
              {"y_max", n.y_max},
              {"u_min", n.u_min},
              {"u_max", n.u_max}};
}

std::string case_file(const char* stem, std::size_t k, std::size_t t0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_k%04zu_t%04zu.csv", stem, k, t0);
  return buf;
}

std::string onestep_file(std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "onestep_k%04zu.csv", k);
  return buf;
}

// Loads an encoder/baseline checkpoint into a freshly sized model.
nn::RnnModel load_rnn_ckpt(const fs::path& file, io::CheckpointMeta* meta_out) {
  const io::CheckpointMeta peek = io::peek_checkpoint(file);
  if (peek.kind != "encoder" && peek.kind != "baseline")
    throw UsageError(file.string() + " holds a '" + peek.kind +
                     "' checkpoint; expected an encoder or baseline");
  nn::RnnModel model(peek.dims.at("d_in").get<std::size_t>(),
                     peek.dims.at("d_out").get<std::size_t>(),
                     peek.dims.at("n_c").get<std::size_t>());
  const io::CheckpointMeta meta = io::load_checkpoint(file, model.params());
  if (meta_out) *meta_out = meta;
  return model;
}

vi::ViModel load_vi_ckpt(const fs::path& file, io::CheckpointMeta* meta_out) {
  const io::CheckpointMeta peek = io::peek_checkpoint(file);
  if (peek.kind != "vi")
    throw UsageError(file.string() + " holds a '" + peek.kind +
                     "' checkpoint; expected a vi checkpoint");
  vi::ViModel model(peek.dims.at("d").get<std::size_t>(),
                    peek.dims.at("n_u").get<std::size_t>(),
                    peek.dims.at("n_z").get<std::size_t>(),
                    peek.dims.at("n_c").get<std::size_t>());
  const io::CheckpointMeta meta = io::load_checkpoint(file, model.all_params());
  if (meta_out) *meta_out = meta;
  return model;
}

void write_train_log(const fs::path& file,
                     const std::vector<vi::TrainLogRow>& log) {
  io::CsvWriter w(file, {"iter", "lr", "loss", "l_q", "l_y", "val_loss"});
  for (const auto& r : log)
    w.row({static_cast<double>(r.iter), r.lr, r.loss, r.l_q, r.l_y,
           r.val_loss});
  w.flush();
}

void copy_params(const std::vector<nn::ConstParamView>& src,
                 const std::vector<nn::ParamView>& dst) {
  if (src.size() != dst.size())
    throw ShapeError("parameter layouts differ in view count");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].size != dst[i].size)
      throw ShapeError("parameter view size mismatch at index " +
                       std::to_string(i));
    std::memcpy(dst[i].data, src[i].data, sizeof(double) * src[i].size);
  }
}

// Writes one forecast summary: per step the ensemble mean, the stored
// quantiles, and the matching observation and truth rows.
void write_forecast_csv(const fs::path& file, const eval::EnsembleSummary& s,
                        const dyngen::Trajectory& tr, std::size_t t0) {
  std::vector<std::string> header{"step", "t"};
  for (std::size_t i = 0; i < s.d; ++i)
    header.push_back("mean_" + std::to_string(i));
  for (const double lv : s.levels)
    for (std::size_t i = 0; i < s.d; ++i)
      header.push_back("q" + format_number(lv) + "_" + std::to_string(i));
  for (std::size_t i = 0; i < s.d; ++i)
    header.push_back("y_" + std::to_string(i));
  for (std::size_t i = 0; i < s.d; ++i)
    header.push_back("phi_" + std::to_string(i));

  io::CsvWriter w(file, header);
  std::vector<double> row;
  for (std::size_t f = 0; f < s.horizon; ++f) {
    row.clear();
    const std::size_t t = t0 + 1 + f;
    row.push_back(static_cast<double>(f + 1));
    row.push_back(static_cast<double>(t));
    for (std::size_t i = 0; i < s.d; ++i) row.push_back(s.mean(f, i));
    for (std::size_t l = 0; l < s.levels.size(); ++l)
      for (std::size_t i = 0; i < s.d; ++i) row.push_back(s.quants[l](f, i));
    for (std::size_t i = 0; i < s.d; ++i) row.push_back(tr.y(t, i));
    for (std::size_t i = 0; i < s.d; ++i) row.push_back(tr.phi(t, i));
    w.row(row);
  }
  w.flush();
}

eval::EnsembleSummary read_forecast_csv(const fs::path& file, std::size_t d) {
  const io::CsvTable table = io::read_csv(file);
  eval::EnsembleSummary s;
  s.horizon = table.rows.size();
  s.d = d;
  s.levels = kSummaryLevels;
  s.mean.resize(s.horizon, d);
  s.quants.assign(kSummaryLevels.size(), nn::Mat(s.horizon, d));
  std::vector<std::size_t> mean_cols(d);
  for (std::size_t i = 0; i < d; ++i)
    mean_cols[i] = table.col("mean_" + std::to_string(i));
  std::vector<std::size_t> q_cols(kSummaryLevels.size() * d);
  for (std::size_t l = 0; l < kSummaryLevels.size(); ++l)
    for (std::size_t i = 0; i < d; ++i)
      q_cols[l * d + i] = table.col("q" + format_number(kSummaryLevels[l]) +
                                    "_" + std::to_string(i));
  for (std::size_t f = 0; f < s.horizon; ++f) {
    for (std::size_t i = 0; i < d; ++i)
      s.mean(f, i) = table.rows[f][mean_cols[i]];
    for (std::size_t l = 0; l < kSummaryLevels.size(); ++l)
      for (std::size_t i = 0; i < d; ++i)
        s.quants[l](f, i) = table.rows[f][q_cols[l * d + i]];
  }
  return s;
}

void write_onestep_csv(const fs::path& file, const sim::MixturePrediction& p,
                       const dyngen::Trajectory& tr) {
  const std::size_t T = p.mu.rows, d = p.mu.cols, M = p.comp_mu.size();
  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < d; ++i)
    header.push_back("mu_" + std::to_string(i));
  for (std::size_t i = 0; i < d; ++i)
    header.push_back("sigma_" + std::to_string(i));
  for (const double pl : kOnestepPs)
    for (std::size_t i = 0; i < d; ++i) {
      header.push_back("lo" + format_number(pl) + "_" + std::to_string(i));
      header.push_back("hi" + format_number(pl) + "_" + std::to_string(i));
    }
  for (std::size_t i = 0; i < d; ++i)
    header.push_back("y_" + std::to_string(i));
  for (std::size_t i = 0; i < d; ++i)
    header.push_back("phi_" + std::to_string(i));

  io::CsvWriter w(file, header);
  std::vector<double> mus(M), sigmas(M), row;
  for (std::size_t r = 0; r < T; ++r) {
    row.clear();
    row.push_back(static_cast<double>(r + 1));
    for (std::size_t i = 0; i < d; ++i) row.push_back(p.mu(r, i));
    for (std::size_t i = 0; i < d; ++i) row.push_back(p.sigma(r, i));
    for (const double pl : kOnestepPs)
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
          mus[m] = p.comp_mu[m](r, i);
          sigmas[m] = p.comp_sigma[m](r, i);
        }
        row.push_back(sim::mixture_quantile(mus.data(), sigmas.data(), M,
                                            0.5 * (1.0 - pl)));
        row.push_back(sim::mixture_quantile(mus.data(), sigmas.data(), M,
                                            0.5 * (1.0 + pl)));
      }
    for (std::size_t i = 0; i < d; ++i) row.push_back(tr.y(r + 1, i));
    for (std::size_t i = 0; i < d; ++i) row.push_back(tr.phi(r + 1, i));
    w.row(row);
  }
  w.flush();
}

json latent_report_json(const eval::LatentReport& rep, double lambda,
                        bool have_lambda) {
  json j;
  if (have_lambda) j["lambda"] = lambda;
  j["dkl"] = rep.dkl;
  j["pca_eigs"] = rep.pca_eigs;
  j["zeta"] = rep.zeta;
  j["param_names"] = rep.param_names;
  j["timestamps"] = rep.timestamps;
  j["rank_warning"] = rep.rank_warning;
  j["n_points"] = rep.m_points.rows;
  json zz = json::array();
  for (std::size_t i = 0; i < rep.corr_zz.rows; ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < rep.corr_zz.cols; ++c)
      row.push_back(rep.corr_zz(i, c));
    zz.push_back(row);
  }
  j["corr_zz"] = zz;
  json zp = json::array();
  for (std::size_t i = 0; i < rep.corr_z_param.rows; ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < rep.corr_z_param.cols; ++c)
      row.push_back(rep.corr_z_param(i, c));
    zp.push_back(row);
  }
  j["corr_z_param"] = zp;
  return j;
}

json selection_json(const eval::LambdaChoice& pick, double delta) {
  json per = json::array();
  for (const auto& [lambda, off] : pick.per_lambda)
    per.push_back(json{{"lambda", lambda}, {"max_offdiag", off}});
  json j{{"found", pick.found},
         {"delta", delta},
         {"max_offdiag", pick.max_offdiag},
         {"per_lambda", per}};
  if (pick.found) j["lambda"] = pick.lambda;
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_path(const json& j, const char* key, fs::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

void maybe_paths(const json& j, const char* key, std::vector<fs::path>& out) {
  if (!j.contains(key)) return;
  out.clear();
  for (const auto& v : j.at(key)) out.emplace_back(v.get<std::string>());
}

std::vector<std::string> paths_to_strings(const std::vector<fs::path>& ps) {
  std::vector<std::string> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

json resolved_json(const GenerateArgs& a) {
  return json{{"system", a.system}, {"out", a.out.string()},
              {"seed", a.seed},     {"k", a.k},
              {"t", a.t},           {"train", a.train},
              {"val", a.val},       {"dt", a.dt},
              {"stride", a.stride}, {"sigma_eps", a.sigma_eps},
              {"burn_in", a.burn_in}};
}

void apply_config(GenerateArgs& a, const json& j) {
  maybe(j, "system", a.system);
  maybe_path(j, "out", a.out);
  maybe(j, "seed", a.seed);
  maybe(j, "k", a.k);
  maybe(j, "t", a.t);
  maybe(j, "train", a.train);
  maybe(j, "val", a.val);
  maybe(j, "dt", a.dt);
  maybe(j, "stride", a.stride);
  maybe(j, "sigma_eps", a.sigma_eps);
  maybe(j, "burn_in", a.burn_in);
}

void cmd_generate(const GenerateArgs& args) {
  if (args.out.empty()) throw UsageError("generate needs --out");
  std::string name = args.system;
  std::replace(name.begin(), name.end(), '-', '_');
  const dyngen::SystemKind sys = dyngen::system_from_name(name);
  ensure_dir(args.out);

  dyngen::Dataset ds;
  if (sys == dyngen::SystemKind::kMackeyGlass) {
    dyngen::MgDatasetConfig cfg;
    cfg.K = args.k;
    cfg.T = args.t;
    cfg.train_count = args.train;
    cfg.val_count = args.val;
    cfg.seed = args.seed;
    if (args.dt > 0.0) cfg.dt = args.dt;
    if (args.stride > 0) cfg.stride = args.stride;
    if (args.sigma_eps >= 0.0) cfg.sigma_eps = args.sigma_eps;
    if (args.burn_in >= 0.0) cfg.burn_in_time = args.burn_in;
    ds = dyngen::generate_mg_dataset(cfg);
  } else {
    dyngen::VdpDatasetConfig cfg;
    cfg.K = args.k;
    cfg.T = args.t;
    cfg.train_count = args.train;
    cfg.val_count = args.val;
    cfg.seed = args.seed;
    if (args.dt > 0.0) cfg.dt = args.dt;
    if (args.stride > 0) cfg.stride = args.stride;
    if (args.sigma_eps >= 0.0) cfg.sigma_eps = args.sigma_eps;
    if (args.burn_in >= 0.0) cfg.burn_in_time = args.burn_in;
    ds = dyngen::generate_vdp_dataset(cfg);
  }

  io::save_dataset(ds, args.out);
  write_json_file(args.out / "config_resolved.json", resolved_json(args));
  std::printf("wrote %s: %s, K=%zu (train %zu / val %zu), T=%zu, d=%zu, "
              "n_u=%zu\n",
              args.out.string().c_str(), dyngen::system_name(ds.system),
              ds.K(), ds.train_count, ds.val_count, ds.T(), ds.d(), ds.n_u());
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

json resolved_json(const TrainArgs& a) {
  return json{{"kind", a.kind},
              {"data", a.data.string()},
              {"out", a.out.string()},
              {"encoder", a.encoder.string()},
              {"n_c", a.n_c},
              {"n_z", a.n_z},
              {"lambdas", a.lambdas},
              {"seq_len", a.cfg.seq_len},
              {"batch", a.cfg.batch},
              {"m", a.cfg.M},
              {"iters", a.cfg.iters},
              {"sigma_z", a.cfg.sigma_z},
              {"lr_max", a.cfg.lr_max},
              {"lr_min", a.cfg.lr_min},
              {"clip", a.cfg.adam.clip},
              {"seed", a.cfg.seed},
              {"val_windows", a.cfg.val_windows},
              {"val_every", a.cfg.val_every},
              {"threads", a.cfg.threads}};
}

void apply_config(TrainArgs& a, const json& j) {
  maybe(j, "kind", a.kind);
  maybe_path(j, "data", a.data);
  maybe_path(j, "out", a.out);
  maybe_path(j, "encoder", a.encoder);
  maybe(j, "n_c", a.n_c);
  maybe(j, "n_z", a.n_z);
  maybe(j, "lambdas", a.lambdas);
  maybe(j, "seq_len", a.cfg.seq_len);
  maybe(j, "batch", a.cfg.batch);
  maybe(j, "m", a.cfg.M);
  maybe(j, "iters", a.cfg.iters);
  maybe(j, "sigma_z", a.cfg.sigma_z);
  maybe(j, "lr_max", a.cfg.lr_max);
  maybe(j, "lr_min", a.cfg.lr_min);
  maybe(j, "clip", a.cfg.adam.clip);
  maybe(j, "seed", a.cfg.seed);
  maybe(j, "val_windows", a.cfg.val_windows);
  maybe(j, "val_every", a.cfg.val_every);
  maybe(j, "threads", a.cfg.threads);
}

void cmd_train(const TrainArgs& args) {
  if (args.kind != "encoder" && args.kind != "baseline" && args.kind != "vi")
    throw UsageError("train kind must be encoder, baseline, or vi");
  if (args.data.empty() || args.out.empty())
    throw UsageError("train needs --data and --out");
  if (args.kind == "vi" && args.encoder.empty())
    throw UsageError("train vi needs --encoder (a pretrained checkpoint)");

  const dyngen::Dataset ds = io::load_dataset(args.data);
  ensure_dir(args.out);
  write_json_file(args.out / ("config_resolved_" + args.kind + ".json"),
                  resolved_json(args));

  if (args.kind != "vi") {
    nn::RnnModel model(ds.d() + ds.n_u(), ds.d(), args.n_c);
    const vi::TrainResult res = vi::train_rnn(model, ds, args.cfg);
    io::CheckpointMeta meta;
    meta.kind = args.kind;
    meta.dims = json{{"d_in", model.d_in}, {"d_out", model.d_out},
                     {"n_c", model.n_c}};
    meta.norm_stats = norm_stats_json(ds.norm);
    meta.config = resolved_json(args);
    meta.seed = args.cfg.seed;
    meta.iteration = res.best_iteration;
    meta.val_loss = res.best_val_loss;
    const auto& cmodel = model;
    io::save_checkpoint(args.out / (args.kind + ".ckpt"), meta,
                        cmodel.params());
    write_train_log(args.out / ("train_log_" + args.kind + ".csv"), res.log);
    std::printf("trained %s: best val loss %.6f at iteration %zu\n",
                args.kind.c_str(), res.best_val_loss, res.best_iteration);
    return;
  }

  io::CheckpointMeta enc_meta;
  const nn::RnnModel encoder = load_rnn_ckpt(args.encoder, &enc_meta);
  if (encoder.d_in != ds.d() + ds.n_u() || encoder.d_out != ds.d() ||
      encoder.n_c != args.n_c)
    throw UsageError("encoder checkpoint dims do not match the dataset and "
                     "--n-c");
  if (args.lambdas.empty()) throw UsageError("train vi needs --lambda values");

  for (const double lambda : args.lambdas) {
    vi::ViModel model(ds.d(), ds.n_u(), args.n_z, args.n_c);
    const auto& cenc = encoder;
    copy_params(cenc.params(), model.encoder.params());
    vi::TrainConfig cfg = args.cfg;
    cfg.lambda = lambda;
    const vi::TrainResult res = vi::train_vi(model, ds, cfg);

    json cfg_json = resolved_json(args);
    cfg_json["lambda"] = lambda;
    io::CheckpointMeta meta;
    meta.kind = "vi";
    meta.dims = json{{"d", model.d}, {"n_u", model.n_u}, {"n_z", model.n_z},
                     {"n_c", model.n_c}};
    meta.norm_stats = norm_stats_json(ds.norm);
    meta.config = cfg_json;
    meta.seed = cfg.seed;
    meta.iteration = res.best_iteration;
    meta.val_loss = res.best_val_loss;
    const std::string tag = "vi_lambda_" + format_number(lambda);
    const auto& cmodel = model;
    io::save_checkpoint(args.out / (tag + ".ckpt"), meta,
                        cmodel.all_params());
    write_train_log(args.out / ("train_log_" + tag + ".csv"), res.log);
    std::printf("trained vi (lambda %s): best val loss %.6f at iteration "
                "%zu\n",
                format_number(lambda).c_str(), res.best_val_loss,
                res.best_iteration);
  }
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

json resolved_json(const ForecastArgs& a) {
  return json{{"ckpt", a.ckpt.string()}, {"data", a.data.string()},
              {"out", a.out.string()},   {"split", a.split},
              {"trajs", a.trajs},        {"starts", a.starts},
              {"tau", a.tau},            {"horizon", a.horizon},
              {"ns", a.ns},              {"seed", a.seed}};
}

void apply_config(ForecastArgs& a, const json& j) {
  maybe_path(j, "ckpt", a.ckpt);
  maybe_path(j, "data", a.data);
  maybe_path(j, "out", a.out);
  maybe(j, "split", a.split);
  maybe(j, "trajs", a.trajs);
  maybe(j, "starts", a.starts);
  maybe(j, "tau", a.tau);
  maybe(j, "horizon", a.horizon);
  maybe(j, "ns", a.ns);
  maybe(j, "seed", a.seed);
}

void cmd_forecast(const ForecastArgs& args) {
  if (args.ckpt.empty() || args.data.empty() || args.out.empty())
    throw UsageError("forecast needs --ckpt, --data, and --out");
  if (args.starts.empty()) throw UsageError("forecast needs --starts");
  const dyngen::Dataset ds = io::load_dataset(args.data);
  const auto [begin, end] = split_range(ds, args.split, args.trajs);
  ensure_dir(args.out);
  write_json_file(args.out / "config_resolved.json", resolved_json(args));

  const io::CheckpointMeta peek = io::peek_checkpoint(args.ckpt);
  nn::RnnModel rnn;
  vi::ViModel vim;
  const bool is_vi = peek.kind == "vi";
  if (is_vi)
    vim = load_vi_ckpt(args.ckpt, nullptr);
  else
    rnn = load_rnn_ckpt(args.ckpt, nullptr);

  io::CsvWriter index(args.out / "forecast_index.csv",
                      {"k", "t0", "complete"});
  std::size_t written = 0, diverged = 0, case_index = 0;
  for (std::size_t k = begin; k < end; ++k) {
    for (const std::size_t t0 : args.starts) {
      const std::uint64_t stream_base =
          static_cast<std::uint64_t>(case_index) * args.ns;
      ++case_index;
      bool ok = true;
      try {
        const sim::ForecastEnsemble ens =
            is_vi ? sim::mc_forecast_vi(vim, ds.trajectories[k], t0, args.tau,
                                        args.horizon, args.ns, args.seed,
                                        stream_base)
                  : sim::mc_forecast_rnn(rnn, ds.trajectories[k], t0, args.tau,
                                         args.horizon, args.ns, args.seed,
                                         stream_base);
        const eval::EnsembleSummary s =
            eval::summarize_ensemble(ens, kSummaryLevels);
        write_forecast_csv(args.out / case_file("forecast", k, t0), s,
                           ds.trajectories[k], t0);
        ++written;
      } catch (const ForecastDiverged& e) {
        std::fprintf(stderr, "trajectory %zu start %zu: %s\n", k, t0,
                     e.what());
        ok = false;
        ++diverged;
      }
      index.row({static_cast<double>(k), static_cast<double>(t0),
                 ok ? 1.0 : 0.0});
    }
  }
  index.flush();
  std::printf("forecasts written: %zu (diverged: %zu) in %s\n", written,
              diverged, args.out.string().c_str());
}

// ---------------------------------------------------------------------------
// onestep
// ---------------------------------------------------------------------------

json resolved_json(const OnestepArgs& a) {
  return json{{"ckpt", a.ckpt.string()}, {"data", a.data.string()},
              {"out", a.out.string()},   {"split", a.split},
              {"trajs", a.trajs},        {"m", a.m},
              {"seed", a.seed}};
}

void apply_config(OnestepArgs& a, const json& j) {
  maybe_path(j, "ckpt", a.ckpt);
  maybe_path(j, "data", a.data);
  maybe_path(j, "out", a.out);
  maybe(j, "split", a.split);
  maybe(j, "trajs", a.trajs);
  maybe(j, "m", a.m);
  maybe(j, "seed", a.seed);
}

void cmd_onestep(const OnestepArgs& args) {
  if (args.ckpt.empty() || args.data.empty() || args.out.empty())
    throw UsageError("onestep needs --ckpt, --data, and --out");
  const dyngen::Dataset ds = io::load_dataset(args.data);
  const auto [begin, end] = split_range(ds, args.split, args.trajs);
  ensure_dir(args.out);
  write_json_file(args.out / "config_resolved.json", resolved_json(args));

  const io::CheckpointMeta peek = io::peek_checkpoint(args.ckpt);
  const bool is_vi = peek.kind == "vi";
  nn::RnnModel rnn;
  vi::ViModel vim;
  if (is_vi)
    vim = load_vi_ckpt(args.ckpt, nullptr);
  else
    rnn = load_rnn_ckpt(args.ckpt, nullptr);

  for (std::size_t k = begin; k < end; ++k) {
    const auto& tr = ds.trajectories[k];
    sim::MixturePrediction pred;
    if (is_vi) {
      pred = sim::one_step_predict(vim, tr, tr.y.rows, args.m, args.seed, k);
    } else {
      const nn::Mat z_empty(1, 0);
      pred = sim::decoder_mixture(rnn, tr, vi::Window{k, 0}, tr.y.rows - 1,
                                  z_empty);
    }
    write_onestep_csv(args.out / onestep_file(k), pred, tr);
  }
  std::printf("one-step predictions for %zu trajectories in %s\n", end - begin,
              args.out.string().c_str());
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

json resolved_json(const EvaluateArgs& a) {
  return json{{"data", a.data.string()},
              {"out", a.out.string()},
              {"onestep_dir", a.onestep_dir.string()},
              {"forecast_dir", a.forecast_dir.string()},
              {"baseline_dir", a.baseline_dir.string()},
              {"discard", a.discard},
              {"cp_levels", a.cp_levels},
              {"ll_denominator", a.ll_denominator}};
}

void apply_config(EvaluateArgs& a, const json& j) {
  maybe_path(j, "data", a.data);
  maybe_path(j, "out", a.out);
  maybe_path(j, "onestep_dir", a.onestep_dir);
  maybe_path(j, "forecast_dir", a.forecast_dir);
  maybe_path(j, "baseline_dir", a.baseline_dir);
  maybe(j, "discard", a.discard);
  maybe(j, "cp_levels", a.cp_levels);
  maybe(j, "ll_denominator", a.ll_denominator);
}

namespace {

struct OnestepEval {
  eval::OnestepMetrics metrics;
  std::map<double, double> cp;
};

OnestepEval evaluate_onestep(const fs::path& dir, const dyngen::Dataset& ds,
                             std::size_t discard, double sigma_eps,
                             eval::LlDenominator den,
                             const std::vector<double>& cp_levels) {
  std::vector<std::pair<std::size_t, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("onestep_k", 0) != 0 || name.size() < 14) continue;
    files.emplace_back(std::stoul(name.substr(9, 4)), entry.path());
  }
  if (files.empty())
    throw UsageError("no one-step prediction files in " + dir.string());
  std::sort(files.begin(), files.end());

  std::vector<eval::OnestepCase> cases;
  std::map<double, std::pair<std::size_t, std::size_t>> counts;  // p -> in/all
  for (const double p : cp_levels) counts[p] = {0, 0};

  for (const auto& [k, file] : files) {
    if (k >= ds.K())
      throw UsageError(file.string() + " points at a missing trajectory");
    const auto& tr = ds.trajectories[k];
    const io::CsvTable table = io::read_csv(file);
    const std::size_t T = table.rows.size(), d = tr.y.cols;
    if (T + 1 != tr.y.rows)
      throw UsageError(file.string() + " does not span the trajectory");
    eval::OnestepCase c;
    c.mu.resize(T, d);
    c.sigma.resize(T, d);
    c.y = tr.y;
    c.phi = tr.phi;
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t mc = table.col("mu_" + std::to_string(i));
      const std::size_t sc = table.col("sigma_" + std::to_string(i));
      for (std::size_t r = 0; r < T; ++r) {
        c.mu(r, i) = table.rows[r][mc];
        c.sigma(r, i) = table.rows[r][sc];
      }
    }
    for (const double p : cp_levels) {
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t lo =
            table.col("lo" + format_number(p) + "_" + std::to_string(i));
        const std::size_t hi =
            table.col("hi" + format_number(p) + "_" + std::to_string(i));
        for (std::size_t r = discard; r < T; ++r) {
          const double obs = tr.y(r + 1, i);
          if (obs >= table.rows[r][lo] && obs <= table.rows[r][hi])
            ++counts[p].first;
          ++counts[p].second;
        }
      }
    }
    cases.push_back(std::move(c));
  }

  OnestepEval out;
  out.metrics = eval::onestep_metrics(cases, discard, sigma_eps, den);
  for (const double p : cp_levels)
    out.cp[p] = static_cast<double>(counts[p].first) /
                static_cast<double>(counts[p].second);
  return out;
}

struct ForecastEval {
  eval::ForecastMetrics metrics;
  double nmae_final_mean = 0.0;
  double nmae_final_median = 0.0;
  std::size_t cases = 0;
  std::size_t skipped = 0;
};

ForecastEval evaluate_forecasts(const fs::path& dir, const dyngen::Dataset& ds,
                                const std::vector<double>& cp_levels) {
  const io::CsvTable index = io::read_csv(dir / "forecast_index.csv");
  const std::size_t kc = index.col("k"), tc = index.col("t0"),
                    cc = index.col("complete");
  std::vector<eval::ForecastCase> cases;
  std::size_t skipped = 0;
  for (const auto& row : index.rows) {
    if (row[cc] == 0.0) {
      ++skipped;
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(row[kc]);
    const std::size_t t0 = static_cast<std::size_t>(row[tc]);
    if (k >= ds.K())
      throw UsageError("forecast index points at a missing trajectory");
    eval::ForecastCase c;
    c.summary = read_forecast_csv(dir / case_file("forecast", k, t0),
                                  ds.trajectories[k].y.cols);
    c.y = ds.trajectories[k].y;
    c.phi = ds.trajectories[k].phi;
    c.t0 = t0;
    cases.push_back(std::move(c));
  }
  if (cases.empty())
    throw UsageError("no completed forecasts in " + dir.string());

  ForecastEval out;
  out.metrics = eval::forecast_metrics(cases, cp_levels);
  out.cases = cases.size();
  out.skipped = skipped;

  // Per-case error at the final step, normalized by the full-trajectory
  // spread of the truth.
  std::vector<double> finals;
  finals.reserve(cases.size());
  const std::size_t last = cases.front().summary.horizon - 1;
  for (const auto& c : cases) {
    double v = 0.0;
    for (std::size_t i = 0; i < c.summary.d; ++i) {
      double mean = 0.0;
      for (std::size_t r = 0; r < c.phi.rows; ++r) mean += c.phi(r, i);
      mean /= static_cast<double>(c.phi.rows);
      double var = 0.0;
      for (std::size_t r = 0; r < c.phi.rows; ++r) {
        const double dd = c.phi(r, i) - mean;
        var += dd * dd;
      }
      var /= static_cast<double>(c.phi.rows);
      v += std::abs(c.summary.mean(last, i) - c.phi(c.t0 + 1 + last, i)) /
           std::sqrt(var);
    }
    finals.push_back(v / static_cast<double>(c.summary.d));
  }
  for (const double v : finals) out.nmae_final_mean += v;
  out.nmae_final_mean /= static_cast<double>(finals.size());
  out.nmae_final_median = eval::empirical_quantile(finals, 0.5);
  return out;
}

}  // namespace

void cmd_evaluate(const EvaluateArgs& args) {
  if (args.data.empty() || args.out.empty())
    throw UsageError("evaluate needs --data and --out");
  if (args.onestep_dir.empty() && args.forecast_dir.empty())
    throw UsageError("evaluate needs --onestep-dir or --forecast-dir");
  const dyngen::Dataset ds = io::load_dataset(args.data);
  ensure_dir(args.out);
  write_json_file(args.out / "config_resolved.json", resolved_json(args));

  eval::LlDenominator den;
  if (args.ll_denominator == "var")
    den = eval::LlDenominator::kVar;
  else if (args.ll_denominator == "std")
    den = eval::LlDenominator::kStd;
  else
    throw UsageError("--ll-denominator must be var or std");

  json report;
  std::vector<std::pair<std::string, double>> flat;

  if (!args.onestep_dir.empty()) {
    const double sigma_eps = normalized_sigma_eps(ds);
    const OnestepEval oe = evaluate_onestep(args.onestep_dir, ds, args.discard,
                                            sigma_eps, den, args.cp_levels);
    json cp;
    for (const auto& [p, v] : oe.cp) cp[format_number(p)] = v;
    report["onestep"] = json{{"e_mu", oe.metrics.e_mu},
                             {"e_sigma", oe.metrics.e_sigma},
                             {"ll", oe.metrics.ll},
                             {"nll", oe.metrics.nll},
                             {"cp", cp},
                             {"discard", args.discard},
                             {"sigma_eps_norm", sigma_eps}};
    flat.emplace_back("onestep.e_mu", oe.metrics.e_mu);
    flat.emplace_back("onestep.e_sigma", oe.metrics.e_sigma);
    flat.emplace_back("onestep.ll", oe.metrics.ll);
    flat.emplace_back("onestep.nll", oe.metrics.nll);
    for (const auto& [p, v] : oe.cp)
      flat.emplace_back("onestep.cp" + format_number(p), v);
  }

  if (!args.forecast_dir.empty()) {
    const ForecastEval fe =
        evaluate_forecasts(args.forecast_dir, ds, args.cp_levels);
    json cp;
    for (const auto& [p, v] : fe.metrics.cp) cp[format_number(p)] = v;
    report["forecast"] = json{{"nmae_final_mean", fe.nmae_final_mean},
                              {"nmae_final_median", fe.nmae_final_median},
                              {"cases", fe.cases},
                              {"skipped", fe.skipped},
                              {"cp", cp}};
    flat.emplace_back("forecast.nmae_final_median", fe.nmae_final_median);

    ForecastEval be;
    const bool have_baseline = !args.baseline_dir.empty();
    if (have_baseline) {
      be = evaluate_forecasts(args.baseline_dir, ds, args.cp_levels);
      json bcp;
      for (const auto& [p, v] : be.metrics.cp) bcp[format_number(p)] = v;
      report["baseline"] = json{{"nmae_final_mean", be.nmae_final_mean},
                                {"nmae_final_median", be.nmae_final_median},
                                {"cases", be.cases},
                                {"skipped", be.skipped},
                                {"cp", bcp}};
      report["nmae_final_median_ratio"] =
          fe.nmae_final_median / be.nmae_final_median;
      flat.emplace_back("baseline.nmae_final_median", be.nmae_final_median);
      flat.emplace_back("nmae_final_median_ratio",
                        fe.nmae_final_median / be.nmae_final_median);
    }

    std::vector<std::string> header{"step", "nmae", "w95"};
    if (have_baseline) {
      header.push_back("nmae_baseline");
      header.push_back("w95_baseline");
    }
    io::CsvWriter growth(args.out / "fig_nmae_growth.csv", header);
    for (std::size_t f = 0; f < fe.metrics.nmae.size(); ++f) {
      std::vector<double> row{static_cast<double>(f + 1), fe.metrics.nmae[f],
                              fe.metrics.w95[f]};
      if (have_baseline) {
        row.push_back(be.metrics.nmae[f]);
        row.push_back(be.metrics.w95[f]);
      }
      growth.row(row);
    }
    growth.flush();
  }

  write_json_file(args.out / "metrics.json", report);
  {
    std::ofstream out(args.out / "metrics.csv");
    if (!out) throw IoError("cannot write metrics.csv");
    out << "metric,value\n";
    char buf[64];
    for (const auto& [name, value] : flat) {
      std::snprintf(buf, sizeof buf, "%.17g", value);
      out << name << "," << buf << "\n";
    }
    if (!out) throw IoError("write failed for metrics.csv");
  }
  std::printf("evaluation written to %s\n", args.out.string().c_str());
}

// ---------------------------------------------------------------------------
// latent
// ---------------------------------------------------------------------------

json resolved_json(const LatentArgs& a) {
  return json{{"ckpts", paths_to_strings(a.ckpts)},
              {"data", a.data.string()},
              {"out", a.out.string()},
              {"split", a.split},
              {"trajs", a.trajs},
              {"timestamps", a.timestamps},
              {"draws", a.draws},
              {"delta", a.delta},
              {"seed", a.seed}};
}

void apply_config(LatentArgs& a, const json& j) {
  maybe_paths(j, "ckpts", a.ckpts);
  maybe_path(j, "data", a.data);
  maybe_path(j, "out", a.out);
  maybe(j, "split", a.split);
  maybe(j, "trajs", a.trajs);
  maybe(j, "timestamps", a.timestamps);
  maybe(j, "draws", a.draws);
  maybe(j, "delta", a.delta);
  maybe(j, "seed", a.seed);
}

void cmd_latent(const LatentArgs& args) {
  if (args.ckpts.empty() || args.data.empty() || args.out.empty())
    throw UsageError("latent needs --ckpt, --data, and --out");
  const dyngen::Dataset ds = io::load_dataset(args.data);
  const auto [begin, end] = split_range(ds, args.split, args.trajs);
  ensure_dir(args.out);
  write_json_file(args.out / "config_resolved.json", resolved_json(args));

  std::vector<std::size_t> timestamps = args.timestamps;
  if (timestamps.empty()) timestamps = eval::default_timestamps(ds.T());

  std::vector<std::pair<double, nn::Mat>> corr_per_lambda;
  for (const fs::path& ckpt : args.ckpts) {
    io::CheckpointMeta meta;
    const vi::ViModel model = load_vi_ckpt(ckpt, &meta);
    const bool have_lambda = meta.config.contains("lambda");
    const double lambda =
        have_lambda ? meta.config.at("lambda").get<double>() : 0.0;
    const eval::LatentReport rep = eval::latent_analysis(
        model, ds, begin, end, timestamps, args.draws, args.seed);
    if (rep.rank_warning)
      std::fprintf(stderr,
                   "warning: fewer pooled posteriors than latent dims\n");

    const std::string suffix =
        args.ckpts.size() > 1 ? "_lambda_" + format_number(lambda) : "";
    write_json_file(args.out / ("latent" + suffix + ".json"),
                    latent_report_json(rep, lambda, have_lambda));

    {
      io::CsvWriter w(args.out / ("fig_pca" + suffix + ".csv"),
                      {"component", "eig", "zeta"});
      for (std::size_t i = 0; i < rep.pca_eigs.size(); ++i)
        w.row({static_cast<double>(i + 1), rep.pca_eigs[i], rep.zeta[i]});
      w.flush();
    }
    {
      std::vector<std::string> header{"traj", "timestamp"};
      for (std::size_t i = 0; i < model.n_z; ++i)
        header.push_back("m_" + std::to_string(i));
      for (const auto& name : rep.param_names)
        header.push_back("param_" + name);
      io::CsvWriter w(args.out / ("fig_latent_scatter" + suffix + ".csv"),
                      header);
      for (std::size_t r = 0; r < rep.m_points.rows; ++r) {
        std::vector<double> row;
        row.push_back(static_cast<double>(begin + r / timestamps.size()));
        row.push_back(
            static_cast<double>(timestamps[r % timestamps.size()]));
        for (std::size_t i = 0; i < model.n_z; ++i)
          row.push_back(rep.m_points(r, i));
        for (std::size_t p = 0; p < rep.param_points.cols; ++p)
          row.push_back(rep.param_points(r, p));
        w.row(row);
      }
      w.flush();
    }
    {
      std::vector<std::string> header{"z"};
      for (std::size_t i = 0; i < model.n_z; ++i)
        header.push_back("z_" + std::to_string(i));
      io::CsvWriter w(args.out / ("fig_corr_zz" + suffix + ".csv"), header);
      for (std::size_t i = 0; i < model.n_z; ++i) {
        std::vector<double> row{static_cast<double>(i)};
        for (std::size_t c = 0; c < model.n_z; ++c)
          row.push_back(rep.corr_zz(i, c));
        w.row(row);
      }
      w.flush();
    }
    {
      std::vector<std::string> header{"z"};
      for (const auto& name : rep.param_names) header.push_back(name);
      io::CsvWriter w(args.out / ("fig_corr_zparam" + suffix + ".csv"),
                      header);
      for (std::size_t i = 0; i < model.n_z; ++i) {
        std::vector<double> row{static_cast<double>(i)};
        for (std::size_t p = 0; p < rep.corr_z_param.cols; ++p)
          row.push_back(rep.corr_z_param(i, p));
        w.row(row);
      }
      w.flush();
    }

    if (have_lambda) corr_per_lambda.emplace_back(lambda, rep.corr_zz);
    std::printf("latent report%s written\n", suffix.c_str());
  }

  if (!corr_per_lambda.empty()) {
    const eval::LambdaChoice pick =
        eval::lambda_selection(corr_per_lambda, args.delta);
    write_json_file(args.out / "lambda_selection.json",
                    selection_json(pick, args.delta));
    if (pick.found)
      std::printf("selected coupling weight: %s\n",
                  format_number(pick.lambda).c_str());
    else
      std::printf("no coupling weight met the threshold %s\n",
                  format_number(args.delta).c_str());
  }
}

// ---------------------------------------------------------------------------
// lambda-select
// ---------------------------------------------------------------------------

json resolved_json(const LambdaSelectArgs& a) {
  return json{{"reports", paths_to_strings(a.reports)},
              {"out", a.out.string()},
              {"delta", a.delta}};
}

void apply_config(LambdaSelectArgs& a, const json& j) {
  maybe_paths(j, "reports", a.reports);
  maybe_path(j, "out", a.out);
  maybe(j, "delta", a.delta);
}

void cmd_lambda_select(const LambdaSelectArgs& args) {
  if (args.reports.empty() || args.out.empty())
    throw UsageError("lambda-select needs --report files and --out");
  std::vector<std::pair<double, nn::Mat>> candidates;
  for (const fs::path& file : args.reports) {
    const json j = read_json_file(file);
    if (!j.contains("lambda") || !j.contains("corr_zz"))
      throw UsageError(file.string() +
                       " lacks lambda/corr_zz; is it a latent report?");
    const auto& zz = j.at("corr_zz");
    const std::size_t n = zz.size();
    nn::Mat corr(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < n; ++c)
        corr(i, c) = zz.at(i).at(c).get<double>();
    candidates.emplace_back(j.at("lambda").get<double>(), std::move(corr));
  }
  ensure_dir(args.out);
  const eval::LambdaChoice pick =
      eval::lambda_selection(candidates, args.delta);
  write_json_file(args.out / "lambda_selection.json",
                  selection_json(pick, args.delta));
  if (pick.found)
    std::printf("selected coupling weight: %s (max off-diagonal %s)\n",
                format_number(pick.lambda).c_str(),
                format_number(pick.max_offdiag).c_str());
  else
    std::printf("no coupling weight met the threshold %s\n",
                format_number(args.delta).c_str());
}

// ---------------------------------------------------------------------------
// reproduce-desk
// ---------------------------------------------------------------------------

json resolved_json(const ReproduceArgs& a) {
  return json{{"out", a.out.string()},
              {"seed", a.seed},
              {"threads", a.threads},
              {"k", a.k},
              {"t", a.t},
              {"train", a.train},
              {"val", a.val},
              {"n_c", a.n_c},
              {"n_z", a.n_z},
              {"seq_len", a.seq_len},
              {"iters", a.iters},
              {"m_train", a.m_train},
              {"m_onestep", a.m_onestep},
              {"ns", a.ns},
              {"tau", a.tau},
              {"horizon", a.horizon},
              {"starts", a.starts},
              {"lambdas", a.lambdas},
              {"discard", a.discard}};
}

void apply_config(ReproduceArgs& a, const json& j) {
  maybe_path(j, "out", a.out);
  maybe(j, "seed", a.seed);
  maybe(j, "threads", a.threads);
  maybe(j, "k", a.k);
  maybe(j, "t", a.t);
  maybe(j, "train", a.train);
  maybe(j, "val", a.val);
  maybe(j, "n_c", a.n_c);
  maybe(j, "n_z", a.n_z);
  maybe(j, "seq_len", a.seq_len);
  maybe(j, "iters", a.iters);
  maybe(j, "m_train", a.m_train);
  maybe(j, "m_onestep", a.m_onestep);
  maybe(j, "ns", a.ns);
  maybe(j, "tau", a.tau);
  maybe(j, "horizon", a.horizon);
  maybe(j, "starts", a.starts);
  maybe(j, "lambdas", a.lambdas);
  maybe(j, "discard", a.discard);
}

namespace {

struct CriterionRow {
  std::string name;
  std::string value;
  std::string target;
  bool pass = false;
};

void print_table(const std::vector<CriterionRow>& rows) {
  std::printf("\n%-52s %-14s %-16s %s\n", "criterion", "value", "target",
              "status");
  for (const auto& r : rows)
    std::printf("%-52s %-14s %-16s %s\n", r.name.c_str(), r.value.c_str(),
                r.target.c_str(), r.pass ? "pass" : "FAIL");
}

}  // namespace

void cmd_reproduce_desk(const ReproduceArgs& args) {
  if (args.out.empty()) throw UsageError("reproduce-desk needs --out");
  ensure_dir(args.out);
  write_json_file(args.out / "config_resolved.json", resolved_json(args));

  // Data.
  GenerateArgs gen;
  gen.system = "mackey_glass";
  gen.out = args.out / "data";
  gen.seed = args.seed;
  gen.k = args.k;
  gen.t = args.t;
  gen.train = args.train;
  gen.val = args.val;
  cmd_generate(gen);

  // One-step pretraining; the same network serves as the comparison model.
  TrainArgs enc;
  enc.kind = "encoder";
  enc.data = gen.out;
  enc.out = args.out / "models";
  enc.n_c = args.n_c;
  enc.cfg.seq_len = args.seq_len;
  enc.cfg.iters = args.iters;
  enc.cfg.seed = args.seed;
  enc.cfg.threads = args.threads;
  cmd_train(enc);
  const fs::path enc_ckpt = enc.out / "encoder.ckpt";

  // Variational training across the coupling-weight sweep.
  TrainArgs vit;
  vit.kind = "vi";
  vit.data = gen.out;
  vit.out = enc.out;
  vit.encoder = enc_ckpt;
  vit.n_c = args.n_c;
  vit.n_z = args.n_z;
  vit.lambdas = args.lambdas;
  vit.cfg.seq_len = args.seq_len;
  vit.cfg.M = args.m_train;
  vit.cfg.iters = args.iters;
  vit.cfg.seed = args.seed;
  vit.cfg.threads = args.threads;
  cmd_train(vit);

  const bool has_unit =
      std::find(args.lambdas.begin(), args.lambdas.end(), 1.0) !=
      args.lambdas.end();
  const double main_lambda = has_unit ? 1.0 : args.lambdas.front();
  const fs::path vi_ckpt =
      enc.out / ("vi_lambda_" + format_number(main_lambda) + ".ckpt");

  // Closed-loop forecasts for both models over the held-out split.
  ForecastArgs fv;
  fv.ckpt = vi_ckpt;
  fv.data = gen.out;
  fv.out = args.out / "forecast_vi";
  fv.split = "val";
  fv.starts = args.starts;
  fv.tau = args.tau;
  fv.horizon = args.horizon;
  fv.ns = args.ns;
  fv.seed = args.seed;
  cmd_forecast(fv);

  ForecastArgs fb = fv;
  fb.ckpt = enc_ckpt;
  fb.out = args.out / "forecast_rnn";
  cmd_forecast(fb);

  // One-step predictive mixtures.
  OnestepArgs os;
  os.ckpt = vi_ckpt;
  os.data = gen.out;
  os.out = args.out / "onestep";
  os.split = "val";
  os.m = args.m_onestep;
  os.seed = args.seed;
  cmd_onestep(os);

  // Metrics.
  EvaluateArgs ev;
  ev.data = gen.out;
  ev.out = args.out / "eval";
  ev.onestep_dir = os.out;
  ev.forecast_dir = fv.out;
  ev.baseline_dir = fb.out;
  ev.discard = args.discard;
  cmd_evaluate(ev);

  // Latent analyses across the sweep, with the weight recommendation.
  LatentArgs la;
  la.ckpts.reserve(args.lambdas.size());
  for (const double l : args.lambdas)
    la.ckpts.push_back(enc.out /
                       ("vi_lambda_" + format_number(l) + ".ckpt"));
  la.data = gen.out;
  la.out = args.out / "latent";
  la.split = "train";
  la.seed = args.seed;
  cmd_latent(la);

  // Acceptance summary.
  const json metrics = read_json_file(ev.out / "metrics.json");
  const std::string main_suffix =
      args.lambdas.size() > 1 ? "_lambda_" + format_number(main_lambda) : "";
  const json latent =
      read_json_file(la.out / ("latent" + main_suffix + ".json"));
  const json selection = read_json_file(la.out / "lambda_selection.json");

  std::vector<CriterionRow> rows;
  json acc;

  {
    const double ratio = metrics.at("nmae_final_median_ratio").get<double>();
    const bool pass = ratio <= 0.8;
    rows.push_back({"5 forecast error ratio (median, vs baseline)",
                    format_number(ratio), "<= 0.8", pass});
    acc["c5"] = json{{"nmae_ratio", ratio}, {"target", 0.8}, {"pass", pass}};
  }
  {
    const auto zeta = latent.at("zeta").get<std::vector<double>>();
    const double zeta3 = zeta.size() >= 3 ? zeta[2] : zeta.back();
    const bool z_pass = zeta3 >= 0.8;
    rows.push_back({"6 variance explained by three components",
                    format_number(zeta3), ">= 0.8", z_pass});

    const auto dkl = latent.at("dkl").get<std::vector<double>>();
    std::size_t active = 0;
    for (const double v : dkl)
      if (v > 0.1) ++active;
    const bool a_pass = active >= 2 && active <= 4;
    rows.push_back({"6 active latent dimensions", std::to_string(active),
                    "in [2, 4]", a_pass});

    const auto names = latent.at("param_names").get<std::vector<std::string>>();
    const auto& zp = latent.at("corr_z_param");
    json per_param;
    double worst_best = 1.0;
    for (std::size_t p = 0; p < names.size(); ++p) {
      double best = 0.0;
      for (std::size_t i = 0; i < zp.size(); ++i)
        best = std::max(best, std::abs(zp.at(i).at(p).get<double>()));
      per_param[names[p]] = best;
      worst_best = std::min(worst_best, best);
    }
    const bool c_pass = worst_best >= 0.7;
    rows.push_back({"6 weakest parameter correlation",
                    format_number(worst_best), ">= 0.7", c_pass});
    acc["c6"] = json{{"zeta3", zeta3},
                     {"active_dims", active},
                     {"corr_per_param", per_param},
                     {"pass", z_pass && a_pass && c_pass}};
  }
  {
    const json& cp = metrics.at("onestep").at("cp");
    json values;
    bool pass = true;
    for (const double p : {0.8, 0.9, 0.95}) {
      const double v = cp.at(format_number(p)).get<double>();
      values[format_number(p)] = v;
      const bool ok = std::abs(v - p) <= 0.05;
      pass = pass && ok;
      rows.push_back({"7 one-step coverage at " + format_number(p),
                      format_number(v),
                      format_number(p) + " +- 0.05", ok});
    }
    acc["c7"] = json{{"cp", values}, {"pass", pass}};
  }
  {
    const bool found = selection.at("found").get<bool>();
    const auto& per = selection.at("per_lambda");
    bool monotone = true;
    for (std::size_t i = 1; i < per.size(); ++i)
      if (per.at(i).at("max_offdiag").get<double>() >
          per.at(i - 1).at("max_offdiag").get<double>() + 1e-12)
        monotone = false;
    const bool pass = found && monotone;
    rows.push_back({"8 coupling-weight rule",
                    found ? format_number(selection.at("lambda").get<double>())
                          : std::string("none"),
                    "finite, monotone", pass});
    acc["c8"] = json{{"found", found},
                     {"monotone", monotone},
                     {"pass", pass}};
    if (found) acc["c8"]["lambda"] = selection.at("lambda");
  }

  bool all = true;
  for (const auto& r : rows) all = all && r.pass;
  acc["all_pass"] = all;
  write_json_file(args.out / "acceptance.json", acc);
  print_table(rows);
  std::printf("\nacceptance summary written to %s\n",
              (args.out / "acceptance.json").string().c_str());
}

}  // namespace vidyn::cli
