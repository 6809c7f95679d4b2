#pragma once

// Test-only reference computations, deliberately independent of the
// polygon-clipping and rasterization paths in the library.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "graspvq/geometry.hpp"
#include "graspvq/rng.hpp"

namespace oracle {

using namespace graspvq;

inline bool inside_rect_frame(const GraspRectangle& r, double x, double y) {
  const double dx = x - r.center_col, dy = y - r.center_row;
  const double along = dx * std::cos(r.angle) + dy * std::sin(r.angle);
  const double across = -dx * std::sin(r.angle) + dy * std::cos(r.angle);
  return std::abs(along) <= r.width / 2.0 && std::abs(across) <= r.height / 2.0;
}

/// Intersection over union by sampling a grid of the given step over the
/// union's bounding box.
inline double raster_jaccard(const GraspRectangle& a, const GraspRectangle& b, double step = 0.01) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto* r : {&a, &b}) {
    const double ext = 0.5 * std::hypot(r->width, r->height);
    x0 = std::min(x0, r->center_col - ext);
    x1 = std::max(x1, r->center_col + ext);
    y0 = std::min(y0, r->center_row - ext);
    y1 = std::max(y1, r->center_row + ext);
  }
  long long inter = 0, uni = 0;
  for (double y = y0 + step / 2; y < y1; y += step) {
    for (double x = x0 + step / 2; x < x1; x += step) {
      const bool ia = inside_rect_frame(a, x, y), ib = inside_rect_frame(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double angle_gap(double a, double b) {
  const double pi = std::numbers::pi;
  double d = std::fmod(std::abs(a - b), pi);
  return std::min(d, pi - d);
}

/// Random rectangle fully inside a size x size image.
inline GraspRectangle random_inbounds_rect(Rng& rng, int size) {
  const double width = rng.uniform(6.0, 0.4 * size);
  const double height = rng.uniform(3.0, 0.25 * size);
  const double angle = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
  const double reach = 0.5 * std::hypot(width, height) + 1.0;
  const double row = rng.uniform(reach, size - 1 - reach);
  const double col = rng.uniform(reach, size - 1 - reach);
  return make_rectangle(row, col, angle, width, height);
}

}  // namespace oracle
