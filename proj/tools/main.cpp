#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ios>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "vidyn/common/error.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vidyn;

// The config file is read before CLI11 runs so that flags given on the
// command line override values from the file.
json config_from_argv(int argc, char** argv) {
  std::string file;
  for (int i = 1; i < argc; ++i) {
    const std::string tok = argv[i];
    if (tok == "--config" && i + 1 < argc)
      file = argv[i + 1];
    else if (tok.rfind("--config=", 0) == 0)
      file = tok.substr(9);
  }
  if (file.empty()) return json::object();
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config file " + file);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(file + " is not valid JSON: " + std::string(e.what()));
  }
}

void path_opt(CLI::App* sub, const std::string& name, fs::path& target,
              const std::string& desc) {
  sub->add_option_function<std::string>(
      name, [&target](const std::string& v) { target = v; }, desc);
}

void paths_opt(CLI::App* sub, const std::string& name,
               std::vector<fs::path>& target, const std::string& desc) {
  sub->add_option_function<std::vector<std::string>>(
      name,
      [&target](const std::vector<std::string>& v) {
        target.assign(v.begin(), v.end());
      },
      desc);
}

struct Command {
  CLI::App* sub = nullptr;
  std::function<json()> resolve;
  std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, BUFSIZ);
  cli::GenerateArgs gen;
  cli::TrainArgs train;
  cli::ForecastArgs fore;
  cli::OnestepArgs ones;
  cli::EvaluateArgs eval_args;
  cli::LatentArgs lat;
  cli::LambdaSelectArgs lsel;
  cli::ReproduceArgs repro;

  try {
    const json cfg = config_from_argv(argc, argv);
    cli::apply_config(gen, cfg);
    cli::apply_config(train, cfg);
    cli::apply_config(fore, cfg);
    cli::apply_config(ones, cfg);
    cli::apply_config(eval_args, cfg);
    cli::apply_config(lat, cfg);
    cli::apply_config(lsel, cfg);
    cli::apply_config(repro, cfg);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: bad config value: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }

  CLI::App app{"Variational sequence models for dynamical systems with "
               "unknown random parameters"};
  app.require_subcommand(1);
  bool print_config = false;
  std::vector<Command> commands;

  {
    auto* s = app.add_subcommand(
        "generate", "Simulate a dataset and write it to a directory");
    s->add_option("--system", gen.system, "mackey_glass or vdp")
        ->capture_default_str();
    path_opt(s, "--out", gen.out, "Output dataset directory");
    s->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    s->add_option("--k", gen.k, "Number of trajectories")
        ->capture_default_str();
    s->add_option("--t", gen.t, "Observed steps per trajectory")
        ->capture_default_str();
    s->add_option("--train", gen.train, "Trajectories in the training split")
        ->capture_default_str();
    s->add_option("--val", gen.val, "Trajectories in the validation split")
        ->capture_default_str();
    s->add_option("--dt", gen.dt, "Integrator step (0 = system default)")
        ->capture_default_str();
    s->add_option("--stride", gen.stride,
                  "Fine steps per observation (0 = system default)")
        ->capture_default_str();
    s->add_option("--sigma-eps", gen.sigma_eps,
                  "Observation noise level (negative = system default)")
        ->capture_default_str();
    s->add_option("--burn-in", gen.burn_in,
                  "Discarded initial time span (negative = system default)")
        ->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(gen); },
                        [&] { cli::cmd_generate(gen); }});
  }

  {
    auto* s = app.add_subcommand(
        "train", "Train a model: encoder, baseline, or vi");
    s->add_option("kind", train.kind, "encoder | baseline | vi");
    path_opt(s, "--data", train.data, "Dataset directory");
    path_opt(s, "--out", train.out, "Output directory for checkpoints");
    path_opt(s, "--encoder", train.encoder,
             "Pretrained encoder checkpoint (required for vi)");
    s->add_option("--n-c", train.n_c, "Recurrent state size")
        ->capture_default_str();
    s->add_option("--n-z", train.n_z, "Latent dimension (vi only)")
        ->capture_default_str();
    s->add_option("--lambda", train.lambdas,
                  "Coupling weight(s); vi trains one model per value")
        ->delimiter(',')
        ->capture_default_str();
    s->add_option("--seq-len", train.cfg.seq_len, "Training window length")
        ->capture_default_str();
    s->add_option("--batch", train.cfg.batch, "Windows per iteration")
        ->capture_default_str();
    s->add_option("--m", train.cfg.M, "Latent draws per window (vi only)")
        ->capture_default_str();
    s->add_option("--iters", train.cfg.iters, "Training iterations")
        ->capture_default_str();
    s->add_option("--sigma-z", train.cfg.sigma_z, "Latent prior scale")
        ->capture_default_str();
    s->add_option("--lr-max", train.cfg.lr_max, "Initial learning rate")
        ->capture_default_str();
    s->add_option("--lr-min", train.cfg.lr_min, "Final learning rate")
        ->capture_default_str();
    s->add_option("--clip", train.cfg.adam.clip, "Gradient norm clip")
        ->capture_default_str();
    s->add_option("--seed", train.cfg.seed, "Random seed")
        ->capture_default_str();
    s->add_option("--val-windows", train.cfg.val_windows,
                  "Windows scored at each validation point")
        ->capture_default_str();
    s->add_option("--val-every", train.cfg.val_every,
                  "Iterations between validation points")
        ->capture_default_str();
    s->add_option("--threads", train.cfg.threads, "Worker threads")
        ->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(train); },
                        [&] { cli::cmd_train(train); }});
  }

  {
    auto* s = app.add_subcommand(
        "forecast", "Monte Carlo closed-loop forecasts from a checkpoint");
    path_opt(s, "--ckpt", fore.ckpt, "Model checkpoint (vi or rnn)");
    path_opt(s, "--data", fore.data, "Dataset directory");
    path_opt(s, "--out", fore.out, "Output directory");
    s->add_option("--split", fore.split, "train or val")
        ->capture_default_str();
    s->add_option("--trajs", fore.trajs,
                  "Trajectories from the split (0 = all)")
        ->capture_default_str();
    s->add_option("--starts", fore.starts, "Forecast start rows")
        ->delimiter(',')
        ->capture_default_str();
    s->add_option("--tau", fore.tau, "Conditioning window length")
        ->capture_default_str();
    s->add_option("--horizon", fore.horizon, "Forecast steps")
        ->capture_default_str();
    s->add_option("--ns", fore.ns, "Ensemble size")->capture_default_str();
    s->add_option("--seed", fore.seed, "Random seed")->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(fore); },
                        [&] { cli::cmd_forecast(fore); }});
  }

  {
    auto* s = app.add_subcommand(
        "onestep", "Teacher-forced one-step predictive mixtures");
    path_opt(s, "--ckpt", ones.ckpt, "Model checkpoint (vi or rnn)");
    path_opt(s, "--data", ones.data, "Dataset directory");
    path_opt(s, "--out", ones.out, "Output directory");
    s->add_option("--split", ones.split, "train or val")
        ->capture_default_str();
    s->add_option("--trajs", ones.trajs,
                  "Trajectories from the split (0 = all)")
        ->capture_default_str();
    s->add_option("--m", ones.m, "Posterior draws per trajectory (vi)")
        ->capture_default_str();
    s->add_option("--seed", ones.seed, "Random seed")->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(ones); },
                        [&] { cli::cmd_onestep(ones); }});
  }

  {
    auto* s = app.add_subcommand(
        "evaluate", "Compute metrics from stored predictions");
    path_opt(s, "--data", eval_args.data, "Dataset directory");
    path_opt(s, "--out", eval_args.out, "Output directory");
    path_opt(s, "--onestep-dir", eval_args.onestep_dir,
             "Directory of one-step prediction files");
    path_opt(s, "--forecast-dir", eval_args.forecast_dir,
             "Directory of forecast summaries");
    path_opt(s, "--baseline-dir", eval_args.baseline_dir,
             "Forecast directory of the comparison model");
    s->add_option("--discard", eval_args.discard,
                  "Initial steps excluded from one-step metrics")
        ->capture_default_str();
    s->add_option("--cp-levels", eval_args.cp_levels,
                  "Coverage probabilities")
        ->delimiter(',')
        ->capture_default_str();
    s->add_option("--ll-denominator", eval_args.ll_denominator,
                  "var or std")
        ->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(eval_args); },
                        [&] { cli::cmd_evaluate(eval_args); }});
  }

  {
    auto* s = app.add_subcommand(
        "latent", "Posterior structure analysis for vi checkpoints");
    paths_opt(s, "--ckpt", lat.ckpts, "vi checkpoint(s), one per weight");
    path_opt(s, "--data", lat.data, "Dataset directory");
    path_opt(s, "--out", lat.out, "Output directory");
    s->add_option("--split", lat.split, "train or val")
        ->capture_default_str();
    s->add_option("--trajs", lat.trajs,
                  "Trajectories from the split (0 = all)")
        ->capture_default_str();
    s->add_option("--timestamps", lat.timestamps,
                  "Rows at which posteriors are pooled (empty = spread)")
        ->delimiter(',');
    s->add_option("--draws", lat.draws, "Samples per posterior")
        ->capture_default_str();
    s->add_option("--delta", lat.delta,
                  "Off-diagonal correlation threshold for the weight rule")
        ->capture_default_str();
    s->add_option("--seed", lat.seed, "Random seed")->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(lat); },
                        [&] { cli::cmd_latent(lat); }});
  }

  {
    auto* s = app.add_subcommand(
        "lambda-select", "Pick the coupling weight from latent reports");
    paths_opt(s, "--report", lsel.reports, "latent report JSON file(s)");
    path_opt(s, "--out", lsel.out, "Output directory");
    s->add_option("--delta", lsel.delta,
                  "Off-diagonal correlation threshold")
        ->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(lsel); },
                        [&] { cli::cmd_lambda_select(lsel); }});
  }

  {
    auto* s = app.add_subcommand(
        "reproduce-desk",
        "Run the full scaled-down study: data, training, forecasts, metrics");
    path_opt(s, "--out", repro.out, "Output directory for the whole run");
    s->add_option("--seed", repro.seed, "Random seed")->capture_default_str();
    s->add_option("--threads", repro.threads, "Worker threads")
        ->capture_default_str();
    s->add_option("--k", repro.k, "Number of trajectories")
        ->capture_default_str();
    s->add_option("--t", repro.t, "Observed steps per trajectory")
        ->capture_default_str();
    s->add_option("--train", repro.train, "Training trajectories")
        ->capture_default_str();
    s->add_option("--val", repro.val, "Validation trajectories")
        ->capture_default_str();
    s->add_option("--n-c", repro.n_c, "Recurrent state size")
        ->capture_default_str();
    s->add_option("--n-z", repro.n_z, "Latent dimension")
        ->capture_default_str();
    s->add_option("--seq-len", repro.seq_len, "Training window length")
        ->capture_default_str();
    s->add_option("--iters", repro.iters, "Training iterations")
        ->capture_default_str();
    s->add_option("--m-train", repro.m_train, "Latent draws in training")
        ->capture_default_str();
    s->add_option("--m-onestep", repro.m_onestep,
                  "Posterior draws for one-step mixtures")
        ->capture_default_str();
    s->add_option("--ns", repro.ns, "Forecast ensemble size")
        ->capture_default_str();
    s->add_option("--tau", repro.tau, "Conditioning window length")
        ->capture_default_str();
    s->add_option("--horizon", repro.horizon, "Forecast steps")
        ->capture_default_str();
    s->add_option("--starts", repro.starts, "Forecast start rows")
        ->delimiter(',')
        ->capture_default_str();
    s->add_option("--lambda", repro.lambdas, "Coupling weight sweep")
        ->delimiter(',')
        ->capture_default_str();
    s->add_option("--discard", repro.discard,
                  "Initial steps excluded from one-step metrics")
        ->capture_default_str();
    commands.push_back({s, [&] { return cli::resolved_json(repro); },
                        [&] { cli::cmd_reproduce_desk(repro); }});
  }

  std::string config_path;
  for (auto& c : commands) {
    c.sub->add_option("--config", config_path,
                      "JSON config file; command-line flags override it");
    c.sub->add_flag("--print-config", print_config,
                    "Print the resolved configuration and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto& c : commands) {
    if (!c.sub->parsed()) continue;
    try {
      if (print_config) {
        std::printf("%s\n", c.resolve().dump(2).c_str());
        return 0;
      }
      c.run();
      return 0;
    } catch (const UsageError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 2;
    } catch (const json::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 2;
    } catch (const IoError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 4;
    } catch (const std::filesystem::filesystem_error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 4;
    } catch (const std::ios_base::failure& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 4;
    } catch (const NumericError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 3;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
    }
  }
  return 2;
}
