#pragma once

#include <filesystem>

#include "vidyn/dyngen/dataset.hpp"

namespace vidyn::io {

// Dataset directory layout: manifest.json plus one traj_%04d.bin per
// trajectory (magic "VIDYN-TRJ1", u32 column count, u32 row count, row-major
// f64 little-endian; columns ordered y..., u..., phi...). Stored values are
// normalized; the manifest carries the stats to invert them.
void save_dataset(const dyngen::Dataset& ds, const std::filesystem::path& dir);
dyngen::Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace vidyn::io
