#pragma once

#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "graspvq/dataset.hpp"
#include "graspvq/geometry.hpp"
#include "graspvq/networks.hpp"

namespace graspvq {

/// Anything that turns a C x S x S image into grasp maps.
class GraspPredictor {
 public:
  virtual ~GraspPredictor() = default;
  virtual GraspMaps predict_maps(const Tensor<float>& image) const = 0;
  virtual int input_channels() const = 0;
  virtual int input_size() const = 0;
};

class ProposedPredictor : public GraspPredictor {
 public:
  ProposedPredictor(std::shared_ptr<VqVae> vqvae, std::shared_ptr<GraspHead> head);
  GraspMaps predict_maps(const Tensor<float>& image) const override;
  int input_channels() const override { return vqvae_->config.input_channels; }
  int input_size() const override { return vqvae_->config.input_size; }

 private:
  std::shared_ptr<VqVae> vqvae_;
  std::shared_ptr<GraspHead> head_;
};

class BaselinePredictor : public GraspPredictor {
 public:
  BaselinePredictor(NetworkConfig config, std::shared_ptr<BaselineNet> net);
  GraspMaps predict_maps(const Tensor<float>& image) const override;
  int input_channels() const override { return config_.input_channels; }
  int input_size() const override { return config_.input_size; }

 private:
  NetworkConfig config_;
  std::shared_ptr<BaselineNet> net_;
};

/// 1 x 4 x H x W network output -> maps (width channel kept as predicted).
GraspMaps tensor_to_maps(const Tensor<float>& output);

/// Builds the predictor stored in a grasp or baseline checkpoint directory.
std::unique_ptr<GraspPredictor> load_predictor(const std::filesystem::path& dir);

struct MetricsRecord {
  double labelled_ratio = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::size_t successes = 0;
  std::size_t total = 0;
  std::vector<double> vq_loss_curve;
  std::vector<double> grasp_loss_curve;
  std::string status = "ok";

  nlohmann::json to_json() const;
};

/// One decoded grasp per image, compared with the full ground-truth
/// rectangles. Throws DatasetError for an empty test set or an unlabelled
/// test sample.
MetricsRecord evaluate(const GraspPredictor& predictor, const std::vector<Sample>& test, double width_scale,
                       const SuccessCriterion& criterion = {});

struct PredictionOutput {
  GraspRectangle grasp;
  nlohmann::json json;  // center_row, center_col, angle, width, quality
};

/// Writes quality.png, angle.png, width.png (jet colour map, per-map min-max),
/// annotated.png, raw_maps.bin (float64, quality/sin/cos/width planes) and
/// prediction.json into output_dir.
PredictionOutput predict(const GraspPredictor& predictor, const std::filesystem::path& image_path,
                         const std::filesystem::path& output_dir, double width_scale);

/// Reads raw_maps.bin back.
GraspMaps read_raw_maps(const std::filesystem::path& path, int height, int width);

}  // namespace graspvq
