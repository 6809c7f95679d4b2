#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "graspvq/layers.hpp"
#include "graspvq/networks.hpp"

// Checkpoint directory: manifest.json + params.bin (little-endian float32,
// parameters concatenated in manifest order).
namespace graspvq {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMetadata {
  std::string phase;  // "vqvae", "grasp" or "baseline"
  int epoch = 0;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& dir, const NetworkConfig& config, const ParamList& params,
                     const CheckpointMetadata& meta);

nlohmann::json read_manifest(const std::filesystem::path& dir);

/// Loads values into `params`. Rejects a fingerprint, name, shape or count
/// mismatch. Returns the stored metadata.
CheckpointMetadata load_checkpoint(const std::filesystem::path& dir, const NetworkConfig& config,
                                   ParamList& params);

}  // namespace graspvq
