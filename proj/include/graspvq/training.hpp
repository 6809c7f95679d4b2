#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "graspvq/config.hpp"
#include "graspvq/networks.hpp"

namespace graspvq {

/// Raised when a loss turns non-finite; the message names epoch, batch and
/// the loss components.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VqEpoch {
  int epoch = 0;
  double reconstruction = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  double total = 0.0;
  double perplexity = 0.0;
};

struct GraspEpoch {
  int epoch = 0;
  double loss = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const std::string&)> log;  // one line per epoch when set
};

struct VqVaeResult {
  std::shared_ptr<VqVae> model;
  double initial_reconstruction = 0.0;  // before any update, over all training images
  std::vector<VqEpoch> history;
};

struct GraspResult {
  std::shared_ptr<GraspHead> head;
  double initial_loss = 0.0;
  std::vector<GraspEpoch> history;
};

struct BaselineResult {
  std::shared_ptr<BaselineNet> net;
  double initial_loss = 0.0;
  std::vector<GraspEpoch> history;
};

/// Trains encoder, codebook and decoder on labelled and unlabelled images.
/// Only images are read; labels are never touched.
VqVaeResult train_vqvae(const DatasetSplit& split, const ExperimentConfig& config, const TrainOptions& options);

/// Freezes the VQ-VAE's encoder and codebook, then trains a fresh grasp head
/// on the labelled samples.
GraspResult train_grasp(const DatasetSplit& split, VqVae& vqvae, const ExperimentConfig& config,
                        const TrainOptions& options);

/// Image-to-maps network trained on the labelled samples only.
BaselineResult train_baseline(const DatasetSplit& split, const ExperimentConfig& config,
                              const TrainOptions& options);

/// Restores a VQ-VAE written by train_vqvae (or the VQ part of a grasp checkpoint).
std::shared_ptr<VqVae> load_vqvae(const std::filesystem::path& dir, const NetworkConfig& config);

/// Parameters stored in a grasp checkpoint: encoder, codebook, head.
ParamList grasp_checkpoint_params(const VqVae& vqvae, const GraspHead& head);

/// B x C x S x S batch from the images of the given samples.
Param image_batch(const std::vector<const Sample*>& samples);
/// B x 4 x S x S label maps (quality, sin, cos, width) of the given samples.
Param label_batch(const std::vector<const Sample*>& samples, double width_scale);

}  // namespace graspvq
