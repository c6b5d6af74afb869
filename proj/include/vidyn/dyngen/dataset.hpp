#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "vidyn/common/rng.hpp"
#include "vidyn/dyngen/systems.hpp"
#include "vidyn/nn/tensor.hpp"

namespace vidyn::dyngen {

enum class SystemKind { kMackeyGlass, kVdp };

const char* system_name(SystemKind k);
SystemKind system_from_name(const std::string& name);

// One sampled trajectory: noisy observations y, known forcing u (zero columns
// for the unforced system), and the noiseless ground truth phi; all (T+1) rows.
struct Trajectory {
  nn::Mat y;
  nn::Mat u;
  nn::Mat phi;
  std::variant<MgParams, VdpParams> params;
  double dt_sample = 0.0;
};

// Min/max per dimension, computed over the training split.
struct NormStats {
  std::vector<double> y_min, y_max;
  std::vector<double> u_min, u_max;
};

struct Dataset {
  SystemKind system = SystemKind::kMackeyGlass;
  std::vector<Trajectory> trajectories;
  NormStats norm;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  std::uint64_t seed = 0;
  double sigma_eps = 0.0;  // raw units
  double dt_fine = 0.0;
  std::size_t stride = 1;
  bool normalized = false;

  std::size_t K() const { return trajectories.size(); }
  std::size_t T() const {
    return trajectories.empty() ? 0 : trajectories.front().y.rows - 1;
  }
  std::size_t d() const {
    return trajectories.empty() ? 0 : trajectories.front().y.cols;
  }
  std::size_t n_u() const {
    return trajectories.empty() ? 0 : trajectories.front().u.cols;
  }
};

// Every stride-th fine-grid point; y = phi + eps with iid Gaussian noise on y
// only (u passes through untouched). u_fine may be empty.
Trajectory downsample_and_noise(const std::vector<double>& phi_fine,
                                const std::vector<double>& u_fine,
                                std::size_t stride, double sigma_eps,
                                RngStream& noise_rng);

// Computes min/max stats over the first train_count trajectories and rescales
// every trajectory in place: v* = (v - min)/(max - min) - 0.5. y and phi share
// the y stats; u uses its own. Throws DegenerateDimension when max == min.
void normalize_dataset(Dataset& ds);

// Inverse map for one value.
double denormalize(double v_star, double v_min, double v_max);

struct MgDatasetConfig {
  std::size_t K = 500;
  std::size_t T = 1000;
  double dt = 0.01;
  std::size_t stride = 100;
  double sigma_eps = 0.03;
  double burn_in_time = 300.0;
  double history_value = 1.2;
  std::size_t train_count = 400;
  std::size_t val_count = 100;
  std::uint64_t seed = 1;
};

struct VdpDatasetConfig {
  std::size_t K = 500;
  std::size_t T = 1000;
  double dt = 0.001;
  std::size_t stride = 200;
  double sigma_eps = 0.075;
  double burn_in_time = 50.0;
  double phi0 = 0.1;
  double dphi0 = 0.0;
  std::size_t train_count = 400;
  std::size_t val_count = 100;
  std::uint64_t seed = 1;
};

// Full generation pipelines: sample parameters per trajectory (independent
// streams keyed by trajectory index), integrate, downsample, add noise,
// normalize. Results are bit-reproducible for a given seed.
Dataset generate_mg_dataset(const MgDatasetConfig& cfg);
Dataset generate_vdp_dataset(const VdpDatasetConfig& cfg);

}  // namespace vidyn::dyngen
