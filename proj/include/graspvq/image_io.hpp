#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>

#include "graspvq/geometry.hpp"
#include "graspvq/tensor.hpp"

// Image files <-> C x H x W float tensors with values in [0, 1].
namespace graspvq {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// channels: 1 (grayscale) or 3 (RGB order).
Tensor<float> load_image(const std::filesystem::path& path, int channels);
void save_image(const std::filesystem::path& path, const Tensor<float>& chw);

Tensor<float> resize_image(const Tensor<float>& chw, int height, int width);

struct ColorScale {
  double min = 0.0;
  double max = 0.0;
};

/// Writes a height x width scalar field min-max normalized through the jet
/// colour map (blue = min, red = max); returns the range used.
ColorScale save_heatmap(const std::filesystem::path& path, std::span<const double> values, int height,
                        int width);

/// Saves the image with the rectangle outline drawn on top (opening edges
/// in red, jaw edges in green).
void save_annotated(const std::filesystem::path& path, const Tensor<float>& chw,
                    const GraspRectangle& rect);

}  // namespace graspvq
