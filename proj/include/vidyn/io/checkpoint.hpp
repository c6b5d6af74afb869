#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidyn/nn/tensor.hpp"

namespace vidyn::io {

// Checkpoint file: magic "VIDYN-CKPT1", u64 manifest length, JSON manifest,
// then the parameter blob as f64 little-endian in manifest layout order.
// Saving the result of a load reproduces the file byte for byte.
struct CheckpointMeta {
  std::string kind;  // "encoder" | "baseline" | "vi"
  nlohmann::json dims;
  nlohmann::json norm_stats;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  double val_loss = 0.0;
};

void save_checkpoint(const std::filesystem::path& file,
                     const CheckpointMeta& meta,
                     const std::vector<nn::ConstParamView>& views);

// Reads the manifest only.
CheckpointMeta peek_checkpoint(const std::filesystem::path& file);

// Fills the given views; the stored layout (names, sizes, order) must match
// exactly.
CheckpointMeta load_checkpoint(const std::filesystem::path& file,
                               const std::vector<nn::ParamView>& views);

}  // namespace vidyn::io
