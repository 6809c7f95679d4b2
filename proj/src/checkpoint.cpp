#include "graspvq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace graspvq {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const NetworkConfig& config, const ParamList& params,
                     const CheckpointMetadata& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  std::int64_t offset = 0;
  std::ofstream blob(dir / kBlob, std::ios::binary);
  if (!blob) throw CheckpointError("cannot write " + (dir / kBlob).string());
  for (const auto& p : params.items()) {
    const auto& v = p.var.value();
    entries.push_back({{"name", p.name}, {"shape", v.shape()}, {"offset", offset}, {"count", v.numel()},
                       {"trainable", p.var.requires_grad()}});
    blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.numel() * sizeof(float)));
    offset += v.numel();
  }
  if (!blob) throw CheckpointError("failed writing " + (dir / kBlob).string());
  nlohmann::json manifest = {{"version", kCheckpointVersion},
                             {"fingerprint", config.fingerprint()},
                             {"config", config.to_json()},
                             {"parameters", entries},
                             {"parameter_count", offset},
                             {"metadata",
                              {{"phase", meta.phase}, {"epoch", meta.epoch}, {"seed", meta.seed}, {"extra", meta.extra}}}};
  std::ofstream(dir / kManifest) << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw CheckpointError("cannot read " + (dir / kManifest).string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest " + (dir / kManifest).string() + ": " + e.what());
  }
  if (!manifest.contains("version")) throw CheckpointError("manifest has no version field");
  if (manifest.at("version") != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + manifest.at("version").dump());
  return manifest;
}

CheckpointMetadata load_checkpoint(const std::filesystem::path& dir, const NetworkConfig& config,
                                   ParamList& params) {
  const auto manifest = read_manifest(dir);
  const std::string expected = config.fingerprint();
  if (manifest.at("fingerprint") != expected)
    throw CheckpointError("architecture fingerprint mismatch: checkpoint " +
                          manifest.at("fingerprint").get<std::string>() + ", config " + expected);
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.items().size())
    throw CheckpointError("checkpoint holds " + std::to_string(entries.size()) + " parameters, expected " +
                          std::to_string(params.items().size()));
  if (manifest.at("parameter_count").get<std::int64_t>() != params.count())
    throw CheckpointError("parameter count mismatch");

  std::ifstream blob(dir / kBlob, std::ios::binary | std::ios::ate);
  if (!blob) throw CheckpointError("cannot read " + (dir / kBlob).string());
  const auto bytes = static_cast<std::int64_t>(blob.tellg());
  if (bytes != params.count() * static_cast<std::int64_t>(sizeof(float)))
    throw CheckpointError("params.bin has " + std::to_string(bytes) + " bytes, expected " +
                          std::to_string(params.count() * sizeof(float)));
  blob.seekg(0);

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto& p = params.items()[i];
    if (e.at("name") != p.name) throw CheckpointError("parameter " + std::to_string(i) + " is " + e.at("name").dump() + ", expected " + p.name);
    if (e.at("shape").get<Shape>() != p.var.shape())
      throw CheckpointError("shape mismatch for " + p.name + ": " + shape_str(e.at("shape").get<Shape>()) + " vs " +
                            shape_str(p.var.shape()));
    Param v = p.var;
    Tensor<float>& t = v.mutable_value();
    blob.seekg(e.at("offset").get<std::int64_t>() * static_cast<std::int64_t>(sizeof(float)));
    blob.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!blob) throw CheckpointError("truncated params.bin at " + p.name);
  }
  const auto& m = manifest.at("metadata");
  CheckpointMetadata meta;
  meta.phase = m.at("phase").get<std::string>();
  meta.epoch = m.at("epoch").get<int>();
  meta.seed = m.at("seed").get<std::uint64_t>();
  meta.extra = m.value("extra", nlohmann::json::object());
  return meta;
}

}  // namespace graspvq
