#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "graspvq/geometry.hpp"
#include "graspvq/tensor.hpp"

namespace graspvq {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One image (C x H x W, values in [0, 1]) with its positive grasps.
///
/// Reads of the image and of the labels are counted so that callers can
/// prove which parts of a dataset a procedure touched.
class Sample {
 public:
  Sample(std::string source_id, Tensor<float> image, std::vector<GraspRectangle> rects);

  const std::string& source_id() const { return source_id_; }
  const Tensor<float>& image() const {
    ++image_reads_;
    return image_;
  }
  const std::vector<GraspRectangle>& positive_rects() const {
    ++label_reads_;
    return rects_;
  }

  int channels() const { return static_cast<int>(image_.dim(0)); }
  int height() const { return static_cast<int>(image_.dim(1)); }
  int width() const { return static_cast<int>(image_.dim(2)); }

  std::uint64_t image_reads() const { return image_reads_; }
  std::uint64_t label_reads() const { return label_reads_; }
  void reset_access_counts() const { image_reads_ = label_reads_ = 0; }

 private:
  std::string source_id_;
  Tensor<float> image_;
  std::vector<GraspRectangle> rects_;
  mutable std::uint64_t image_reads_ = 0;
  mutable std::uint64_t label_reads_ = 0;
};

// ---- Cornell grasping dataset --------------------------------------------

struct CornellLoadReport {
  std::size_t images = 0;
  std::size_t rectangles = 0;
  std::size_t skipped_rectangles = 0;  // NaN or degenerate corner quadruples
};

/// Loads every pcdNNNNr.png below `directory` with its pcdNNNNcpos.txt.
/// Images are centre-cropped to a square and resized to image_size; the
/// rectangles follow the same transform. Depth and negative files are ignored.
std::vector<Sample> load_cornell(const std::filesystem::path& directory, int image_size,
                                 CornellLoadReport* report = nullptr);

/// Parses a Cornell rectangle file: "x y" per line, 4 lines per rectangle.
/// Rejected quadruples are skipped and counted.
std::vector<GraspRectangle> parse_cornell_rectangles(std::istream& in, std::size_t* skipped);

/// Maps an original-image coordinate through centre-crop + resize.
struct CropResize {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;

  static CropResize for_image(int height, int width, int target);
  Point apply(Point p) const;
};

/// Centre-crops to a square and resizes to target x target.
Tensor<float> crop_resize_image(const Tensor<float>& chw, int target);

// ---- Splitting -----------------------------------------------------------

struct DatasetSplit {
  std::vector<Sample> labelled;
  std::vector<Sample> unlabelled;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
  double labelled_ratio = 0.1;
  double test_fraction = 0.1;
};

struct SplitOptions {
  /// When set, samples sharing a key always land in the same partition
  /// (object-wise split). Partition sizes then round up to whole groups.
  std::function<std::string(const Sample&)> group_key;
};

/// Shuffles by seed, draws round(test_fraction * N) test samples, then
/// round(labelled_ratio * remaining) labelled samples; the rest is unlabelled.
DatasetSplit split(std::vector<Sample> samples, double test_fraction, double labelled_ratio,
                   std::uint64_t seed, const SplitOptions& options = {});

// ---- Augmentation ----------------------------------------------------------

/// Rotation about the image centre by quarter_turns * pi/2 (angles measured
/// from +x towards +y), then an optional left-right mirror.
Tensor<float> transform_image(const Tensor<float>& chw, int quarter_turns, bool flip);
std::vector<GraspRectangle> transform_rectangles(std::span<const GraspRectangle> rects, int height,
                                                 int width, int quarter_turns, bool flip);

/// rotation must be a multiple of pi/2. Rectangles whose centre leaves the
/// image are dropped.
Sample augment(const Sample& sample, double rotation, bool flip);

/// Draws one of the eight right-angle/mirror transforms.
struct AugmentChoice {
  int quarter_turns = 0;
  bool flip = false;
};
AugmentChoice draw_augmentation(std::uint64_t seed);

// ---- Synthetic bars ------------------------------------------------------

struct SyntheticParams {
  double center_row = 0.0;
  double center_col = 0.0;
  double bar_angle = 0.0;  // axis of the bar
  double length = 0.0;
  double thickness = 0.0;
  double foreground = 0.0;
  double background = 0.0;
};

struct SyntheticSample {
  Sample sample;
  SyntheticParams params;
};

/// n grayscale images, each a bright bar on a dark background with mild
/// noise, labelled with the single grasp across the bar's middle.
std::vector<SyntheticSample> synth_generate_detailed(int n, int image_size, std::uint64_t seed);
std::vector<Sample> synth_generate(int n, int image_size, std::uint64_t seed);

/// Directory of PNGs plus index.jsonl (source_id, image, corners, params).
void write_synthetic(const std::filesystem::path& directory,
                     const std::vector<SyntheticSample>& samples);
std::vector<Sample> read_synthetic(const std::filesystem::path& directory);

}  // namespace graspvq
