#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "graspvq/dataset.hpp"
#include "graspvq/networks.hpp"
#include "graspvq/optimizer.hpp"

namespace graspvq {

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic", "synthetic-dir" or "cornell"
  std::string path;                // for cornell / synthetic-dir; GRASPVQ_DATA when empty
  int synthetic_count = 300;
  std::uint64_t synthetic_seed = 0;
  bool object_wise = false;  // cornell: keep images of one object in one partition
};

struct ExperimentConfig {
  DatasetSpec dataset;
  NetworkConfig network;
  OptimizerConfig optimizer;
  double labelled_ratio = 0.1;
  double test_fraction = 0.1;
  std::vector<std::uint64_t> seeds{0};
  int vqvae_epochs = 100;
  int grasp_epochs = 200;
  int batch_size = 8;
  double width_scale = kDefaultWidthScale;
  bool augment = false;
  std::filesystem::path output_dir = "runs";
  std::vector<double> ratios{0.1, 0.5, 0.9};  // sweep only
  std::vector<std::string> methods{"proposed", "baseline"};

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Resolved dataset root: explicit path, else $GRASPVQ_DATA, else empty.
std::string resolve_data_path(const DatasetSpec& spec);

/// Builds the sample list the config describes, checking the channel count
/// and image size against the network.
std::vector<Sample> load_dataset(const ExperimentConfig& config);

/// Split of the loaded samples for one seed and labelled ratio.
DatasetSplit make_split(const std::vector<Sample>& samples, const ExperimentConfig& config, double labelled_ratio,
                        std::uint64_t seed);

}  // namespace graspvq
