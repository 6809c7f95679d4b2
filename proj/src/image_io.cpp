#include "graspvq/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace graspvq {
namespace {

// 8-bit BGR / gray Mat -> C x H x W tensor in RGB order.
Tensor<float> to_tensor(const cv::Mat& mat) {
  const int channels = mat.channels();
  Tensor<float> out({channels, mat.rows, mat.cols});
  const std::int64_t plane = static_cast<std::int64_t>(mat.rows) * mat.cols;
  for (int r = 0; r < mat.rows; ++r) {
    const std::uint8_t* row = mat.ptr<std::uint8_t>(r);
    for (int c = 0; c < mat.cols; ++c) {
      for (int k = 0; k < channels; ++k) {
        const int src = channels == 3 ? 2 - k : k;  // BGR -> RGB
        out[k * plane + r * mat.cols + c] = static_cast<float>(row[c * channels + src]) / 255.0f;
      }
    }
  }
  return out;
}

cv::Mat to_mat(const Tensor<float>& chw) {
  if (chw.rank() != 3 || (chw.dim(0) != 1 && chw.dim(0) != 3)) {
    throw ImageError("expected a 1- or 3-channel C x H x W image, got " + shape_str(chw.shape()));
  }
  const int channels = static_cast<int>(chw.dim(0));
  const int h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
  cv::Mat mat(h, w, channels == 3 ? CV_8UC3 : CV_8UC1);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int r = 0; r < h; ++r) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(r);
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < channels; ++k) {
        const int dst = channels == 3 ? 2 - k : k;
        const float v = std::clamp(chw[k * plane + r * w + c], 0.0f, 1.0f);
        row[c * channels + dst] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return mat;
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  if (!cv::imwrite(path.string(), mat)) throw ImageError("cannot write image " + path.string());
}

}  // namespace

Tensor<float> load_image(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw ImageError("channels must be 1 or 3");
  cv::Mat mat = cv::imread(path.string(), channels == 3 ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw ImageError("cannot read image " + path.string());
  if (mat.depth() != CV_8U) mat.convertTo(mat, CV_8U);
  return to_tensor(mat);
}

void save_image(const std::filesystem::path& path, const Tensor<float>& chw) {
  write_or_throw(path, to_mat(chw));
}

Tensor<float> resize_image(const Tensor<float>& chw, int height, int width) {
  const int channels = static_cast<int>(chw.dim(0));
  const int h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
  if (h == height && w == width) return chw;
  Tensor<float> out({channels, height, width});
  const int interp = (height < h || width < w) ? cv::INTER_AREA : cv::INTER_LINEAR;
  for (int k = 0; k < channels; ++k) {
    cv::Mat src(h, w, CV_32F, const_cast<float*>(chw.data() + static_cast<std::int64_t>(k) * h * w));
    cv::Mat dst(height, width, CV_32F, out.data() + static_cast<std::int64_t>(k) * height * width);
    cv::resize(src, dst, dst.size(), 0, 0, interp);
  }
  for (auto& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

ColorScale save_heatmap(const std::filesystem::path& path, std::span<const double> values, int height,
                        int width) {
  if (static_cast<std::int64_t>(values.size()) != static_cast<std::int64_t>(height) * width) {
    throw ImageError("heatmap size mismatch");
  }
  ColorScale scale{values.empty() ? 0.0 : values[0], values.empty() ? 0.0 : values[0]};
  for (double v : values) {
    scale.min = std::min(scale.min, v);
    scale.max = std::max(scale.max, v);
  }
  const double span = scale.max - scale.min;
  cv::Mat gray(height, width, CV_8UC1);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double v = values[static_cast<std::size_t>(r) * width + c];
      const double t = span > 0.0 ? (v - scale.min) / span : 0.0;
      gray.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
  }
  cv::Mat colour;
  cv::applyColorMap(gray, colour, cv::COLORMAP_JET);
  write_or_throw(path, colour);
  return scale;
}

void save_annotated(const std::filesystem::path& path, const Tensor<float>& chw,
                    const GraspRectangle& rect) {
  cv::Mat mat = to_mat(chw);
  if (mat.channels() == 1) cv::cvtColor(mat, mat, cv::COLOR_GRAY2BGR);
  const auto corners = rect.corners();
  std::array<cv::Point, 4> pts;
  for (int i = 0; i < 4; ++i) {
    pts[i] = cv::Point(static_cast<int>(std::lround(corners[i].x)),
                       static_cast<int>(std::lround(corners[i].y)));
  }
  const cv::Scalar red(0, 0, 255), green(0, 200, 0);
  cv::line(mat, pts[0], pts[1], red, 1, cv::LINE_AA);
  cv::line(mat, pts[2], pts[3], red, 1, cv::LINE_AA);
  cv::line(mat, pts[1], pts[2], green, 1, cv::LINE_AA);
  cv::line(mat, pts[3], pts[0], green, 1, cv::LINE_AA);
  write_or_throw(path, mat);
}

}  // namespace graspvq
