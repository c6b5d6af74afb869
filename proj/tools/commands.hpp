#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidyn/vi/train.hpp"

namespace vidyn::cli {

struct GenerateArgs {
  std::string system = "mackey_glass";
  std::filesystem::path out;
  std::uint64_t seed = 1;
  std::size_t k = 500;
  std::size_t t = 1000;
  std::size_t train = 400;
  std::size_t val = 100;
  double dt = 0.0;          // 0 keeps the system default
  std::size_t stride = 0;   // 0 keeps the system default
  double sigma_eps = -1.0;  // negative keeps the system default
  double burn_in = -1.0;    // negative keeps the system default
};

struct TrainArgs {
  std::string kind;  // encoder | baseline | vi
  std::filesystem::path data;
  std::filesystem::path out;
  std::filesystem::path encoder;  // required for kind=vi
  std::size_t n_c = 128;
  std::size_t n_z = 10;
  std::vector<double> lambdas = {1.0};
  vi::TrainConfig cfg;
};

struct ForecastArgs {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string split = "val";
  std::size_t trajs = 0;  // 0 = the whole split
  std::vector<std::size_t> starts = {300, 350, 400, 450, 500};
  std::size_t tau = 200;
  std::size_t horizon = 500;
  std::size_t ns = 1000;
  std::uint64_t seed = 1;
};

struct OnestepArgs {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string split = "val";
  std::size_t trajs = 0;
  std::size_t m = 200;
  std::uint64_t seed = 1;
};

struct EvaluateArgs {
  std::filesystem::path data;
  std::filesystem::path out;
  std::filesystem::path onestep_dir;
  std::filesystem::path forecast_dir;
  std::filesystem::path baseline_dir;  // optional comparison run
  std::size_t discard = 200;
  std::vector<double> cp_levels = {0.8, 0.9, 0.95};
  std::string ll_denominator = "var";
};

struct LatentArgs {
  std::vector<std::filesystem::path> ckpts;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string split = "train";
  std::size_t trajs = 0;
  std::vector<std::size_t> timestamps;  // empty = five spread over [200, T]
  std::size_t draws = 20;
  double delta = 0.1;
  std::uint64_t seed = 1;
};

struct LambdaSelectArgs {
  std::vector<std::filesystem::path> reports;
  std::filesystem::path out;
  double delta = 0.1;
};

struct ReproduceArgs {
  std::filesystem::path out;
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  // Scaled-down defaults sized for a workstation run; the full protocol is
  // reachable by raising them.
  std::size_t k = 60;
  std::size_t t = 600;
  std::size_t train = 40;
  std::size_t val = 20;
  std::size_t n_c = 32;
  std::size_t n_z = 6;
  std::size_t seq_len = 100;
  std::size_t iters = 3000;
  std::size_t m_train = 10;
  std::size_t m_onestep = 200;
  std::size_t ns = 300;
  std::size_t tau = 100;
  std::size_t horizon = 400;
  std::vector<std::size_t> starts = {100, 150, 200};
  std::vector<double> lambdas = {0.1, 1.0, 10.0};
  std::size_t discard = 200;
};

void cmd_generate(const GenerateArgs& args);
void cmd_train(const TrainArgs& args);
void cmd_forecast(const ForecastArgs& args);
void cmd_onestep(const OnestepArgs& args);
void cmd_evaluate(const EvaluateArgs& args);
void cmd_latent(const LatentArgs& args);
void cmd_lambda_select(const LambdaSelectArgs& args);
void cmd_reproduce_desk(const ReproduceArgs& args);

// Resolved-configuration dumps, also written beside every command's outputs.
nlohmann::json resolved_json(const GenerateArgs& a);
nlohmann::json resolved_json(const TrainArgs& a);
nlohmann::json resolved_json(const ForecastArgs& a);
nlohmann::json resolved_json(const OnestepArgs& a);
nlohmann::json resolved_json(const EvaluateArgs& a);
nlohmann::json resolved_json(const LatentArgs& a);
nlohmann::json resolved_json(const LambdaSelectArgs& a);
nlohmann::json resolved_json(const ReproduceArgs& a);

// Overlays config-file values onto the defaults; command-line flags are
// applied afterwards by the parser and therefore win.
void apply_config(GenerateArgs& a, const nlohmann::json& j);
void apply_config(TrainArgs& a, const nlohmann::json& j);
void apply_config(ForecastArgs& a, const nlohmann::json& j);
void apply_config(OnestepArgs& a, const nlohmann::json& j);
void apply_config(EvaluateArgs& a, const nlohmann::json& j);
void apply_config(LatentArgs& a, const nlohmann::json& j);
void apply_config(LambdaSelectArgs& a, const nlohmann::json& j);
void apply_config(ReproduceArgs& a, const nlohmann::json& j);

// Short %g-style rendering used in file names and reports (1 -> "1",
// 0.1 -> "0.1").
std::string format_number(double v);

}  // namespace vidyn::cli
