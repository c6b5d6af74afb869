#include "vidyn/io/checkpoint.hpp"

#include <fstream>

#include "vidyn/common/error.hpp"

namespace vidyn::io {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "VIDYN-CKPT1";
constexpr std::size_t kMagicLen = 11;

json meta_to_json(const CheckpointMeta& meta,
                  const std::vector<nn::ConstParamView>& views) {
  json layout = json::array();
  for (const auto& v : views)
    layout.push_back({{"name", v.name}, {"size", v.size}});
  return json{
      {"kind", meta.kind},         {"dims", meta.dims},
      {"norm_stats", meta.norm_stats}, {"config", meta.config},
      {"seed", meta.seed},         {"iteration", meta.iteration},
      {"val_loss", meta.val_loss}, {"layout", layout},
  };
}

json read_manifest(std::ifstream& in, const std::filesystem::path& file) {
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::string(magic, kMagicLen) != kMagic)
    throw IoError(file.string() + ": not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw IoError(file.string() + ": truncated checkpoint header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(file.string() + ": truncated checkpoint manifest");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": manifest parse error: " + e.what());
  }
}

CheckpointMeta meta_from_json(const json& j,
                              const std::filesystem::path& file) {
  CheckpointMeta meta;
  try {
    meta.kind = j.at("kind");
    meta.dims = j.at("dims");
    meta.norm_stats = j.at("norm_stats");
    meta.config = j.at("config");
    meta.seed = j.at("seed");
    meta.iteration = j.at("iteration");
    meta.val_loss = j.at("val_loss");
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": manifest field error: " + e.what());
  }
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file,
                     const CheckpointMeta& meta,
                     const std::vector<nn::ConstParamView>& views) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  const std::string manifest = meta_to_json(meta, views).dump();
  const std::uint64_t len = manifest.size();
  out.write(kMagic, kMagicLen);
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(manifest.data(), static_cast<std::streamsize>(len));
  for (const auto& v : views)
    out.write(reinterpret_cast<const char*>(v.data),
              static_cast<std::streamsize>(sizeof(double) * v.size));
  if (!out) throw IoError("write failed for " + file.string());
}

CheckpointMeta peek_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  const json j = read_manifest(in, file);
  return meta_from_json(j, file);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& file,
                               const std::vector<nn::ParamView>& views) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  const json j = read_manifest(in, file);
  const CheckpointMeta meta = meta_from_json(j, file);

  const json& layout = j.at("layout");
  if (layout.size() != views.size())
    throw IoError(file.string() + ": parameter layout mismatch (" +
                  std::to_string(layout.size()) + " stored tensors, " +
                  std::to_string(views.size()) + " expected)");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string name = layout[i].at("name");
    const std::size_t size = layout[i].at("size");
    if (name != views[i].name || size != views[i].size)
      throw IoError(file.string() + ": layout entry " + std::to_string(i) +
                    " is " + name + "[" + std::to_string(size) +
                    "], expected " + views[i].name + "[" +
                    std::to_string(views[i].size) + "]");
  }
  for (const auto& v : views) {
    in.read(reinterpret_cast<char*>(v.data),
            static_cast<std::streamsize>(sizeof(double) * v.size));
  }
  if (!in) throw IoError(file.string() + ": truncated parameter blob");
  return meta;
}

}  // namespace vidyn::io
