#include "vidyn/io/dataset_io.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "vidyn/common/error.hpp"

namespace vidyn::io {

namespace {

using nlohmann::json;

constexpr char kTrajMagic[] = "VIDYN-TRJ1";
constexpr std::size_t kTrajMagicLen = 10;

std::string traj_filename(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%04zu.bin", k);
  return buf;
}

void write_traj(const std::filesystem::path& file,
                const dyngen::Trajectory& tr) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  const std::uint32_t cols =
      static_cast<std::uint32_t>(tr.y.cols + tr.u.cols + tr.phi.cols);
  const std::uint32_t rows = static_cast<std::uint32_t>(tr.y.rows);
  out.write(kTrajMagic, kTrajMagicLen);
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  for (std::uint32_t t = 0; t < rows; ++t) {
    out.write(reinterpret_cast<const char*>(tr.y.row(t)),
              sizeof(double) * tr.y.cols);
    if (tr.u.cols > 0)
      out.write(reinterpret_cast<const char*>(tr.u.row(t)),
                sizeof(double) * tr.u.cols);
    out.write(reinterpret_cast<const char*>(tr.phi.row(t)),
              sizeof(double) * tr.phi.cols);
  }
  if (!out) throw IoError("write failed for " + file.string());
}

void read_traj(const std::filesystem::path& file, std::size_t d,
               std::size_t n_u, dyngen::Trajectory* tr) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[kTrajMagicLen];
  in.read(magic, kTrajMagicLen);
  if (!in || std::string(magic, kTrajMagicLen) != kTrajMagic)
    throw IoError(file.string() + ": bad trajectory magic");
  std::uint32_t cols = 0, rows = 0;
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  if (!in || cols != d + n_u + d)
    throw IoError(file.string() + ": column count mismatch");
  tr->y.resize(rows, d);
  tr->u.resize(rows, n_u);
  tr->phi.resize(rows, d);
  for (std::uint32_t t = 0; t < rows; ++t) {
    in.read(reinterpret_cast<char*>(tr->y.row(t)), sizeof(double) * d);
    if (n_u > 0)
      in.read(reinterpret_cast<char*>(tr->u.row(t)), sizeof(double) * n_u);
    in.read(reinterpret_cast<char*>(tr->phi.row(t)), sizeof(double) * d);
  }
  if (!in) throw IoError(file.string() + ": truncated trajectory data");
}

}  // namespace

void save_dataset(const dyngen::Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());

  json params = json::array();
  for (const auto& tr : ds.trajectories) {
    if (const auto* mg = std::get_if<dyngen::MgParams>(&tr.params)) {
      params.push_back(
          {{"alpha", mg->alpha}, {"gamma", mg->gamma}, {"tau", mg->tau}});
    } else {
      const auto& vp = std::get<dyngen::VdpParams>(tr.params);
      params.push_back({{"gamma", vp.gamma},
                        {"alpha", vp.alpha},
                        {"theta", vp.theta},
                        {"u_ref", vp.u_ref}});
    }
  }

  const json manifest = {
      {"system", dyngen::system_name(ds.system)},
      {"K", ds.K()},
      {"T", ds.T()},
      {"dt_fine", ds.dt_fine},
      {"stride", ds.stride},
      {"sigma_eps", ds.sigma_eps},
      {"seed", ds.seed},
      {"normalized", ds.normalized},
      {"norm_stats",
       {{"y_min", ds.norm.y_min},
        {"y_max", ds.norm.y_max},
        {"u_min", ds.norm.u_min},
        {"u_max", ds.norm.u_max}}},
      {"train_count", ds.train_count},
      {"val_count", ds.val_count},
      {"params", params},
  };

  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot write manifest in " + dir.string());
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("manifest write failed in " + dir.string());

  for (std::size_t k = 0; k < ds.K(); ++k)
    write_traj(dir / traj_filename(k), ds.trajectories[k]);
}

dyngen::Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot open manifest in " + dir.string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw IoError(dir.string() + ": manifest parse error: " + e.what());
  }

  dyngen::Dataset ds;
  try {
    ds.system = dyngen::system_from_name(manifest.at("system"));
    ds.seed = manifest.at("seed");
    ds.sigma_eps = manifest.at("sigma_eps");
    ds.dt_fine = manifest.at("dt_fine");
    ds.stride = manifest.at("stride");
    ds.train_count = manifest.at("train_count");
    ds.val_count = manifest.at("val_count");
    ds.normalized = manifest.value("normalized", true);
    const json& stats = manifest.at("norm_stats");
    ds.norm.y_min = stats.at("y_min").get<std::vector<double>>();
    ds.norm.y_max = stats.at("y_max").get<std::vector<double>>();
    ds.norm.u_min = stats.at("u_min").get<std::vector<double>>();
    ds.norm.u_max = stats.at("u_max").get<std::vector<double>>();

    const json& params = manifest.at("params");
    const std::size_t K = manifest.at("K");
    if (params.size() != K)
      throw IoError(dir.string() + ": params array length != K");
    const std::size_t d = ds.norm.y_min.size();
    const std::size_t n_u = ds.norm.u_min.size();
    ds.trajectories.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      dyngen::Trajectory& tr = ds.trajectories[k];
      read_traj(dir / traj_filename(k), d, n_u, &tr);
      tr.dt_sample = ds.dt_fine * static_cast<double>(ds.stride);
      const json& p = params[k];
      if (ds.system == dyngen::SystemKind::kMackeyGlass) {
        tr.params = dyngen::MgParams{p.at("alpha"), p.at("gamma"), p.at("tau")};
      } else {
        tr.params = dyngen::VdpParams{p.at("gamma"), p.at("alpha"),
                                      p.at("theta"), p.at("u_ref")};
      }
    }
  } catch (const json::exception& e) {
    throw IoError(dir.string() + ": manifest field error: " + e.what());
  }
  return ds;
}

}  // namespace vidyn::io
