#include "graspvq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace graspvq {
namespace {

constexpr double kPi = std::numbers::pi;

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

std::vector<Point> counter_clockwise(const std::array<Point, 4>& quad) {
  std::vector<Point> poly(quad.begin(), quad.end());
  if (polygon_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

// Sutherland-Hodgman against a convex counter-clockwise clip polygon.
std::vector<Point> clip(std::vector<Point> subject, const std::vector<Point>& clipper) {
  for (std::size_t i = 0; i < clipper.size() && !subject.empty(); ++i) {
    const Point a = clipper[i];
    const Point b = clipper[(i + 1) % clipper.size()];
    std::vector<Point> out;
    for (std::size_t j = 0; j < subject.size(); ++j) {
      const Point cur = subject[j];
      const Point prev = subject[(j + subject.size() - 1) % subject.size()];
      const double dc = cross(a, b, cur);
      const double dp = cross(a, b, prev);
      if (dc >= 0.0) {
        if (dp < 0.0) {
          const double t = dp / (dp - dc);
          out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        out.push_back(cur);
      } else if (dp >= 0.0) {
        const double t = dp / (dp - dc);
        out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

double angle_difference(double a, double b) {
  const double d = std::abs(normalize_angle(a - b));
  return std::min(d, kPi - d);
}

}  // namespace

double normalize_angle(double angle) {
  double a = std::fmod(angle + kPi / 2.0, kPi);
  if (a < 0.0) a += kPi;
  a -= kPi / 2.0;
  // fmod can land exactly on the excluded upper bound after the shift.
  if (a >= kPi / 2.0) a -= kPi;
  return a;
}

std::array<Point, 4> GraspRectangle::corners() const {
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double vx = -uy, vy = ux;
  const double hw = width / 2.0, hh = height / 2.0;
  const Point c{center_col, center_row};
  return {{{c.x - ux * hw - vx * hh, c.y - uy * hw - vy * hh},
           {c.x + ux * hw - vx * hh, c.y + uy * hw - vy * hh},
           {c.x + ux * hw + vx * hh, c.y + uy * hw + vy * hh},
           {c.x - ux * hw + vx * hh, c.y - uy * hw + vy * hh}}};
}

GraspRectangle make_rectangle(double center_row, double center_col, double angle, double width,
                              double height, double quality) {
  for (double v : {center_row, center_col, angle, width, height, quality}) {
    if (!std::isfinite(v)) throw RejectedRectangle("rectangle has a non-finite parameter");
  }
  if (width <= 0.0 || height <= 0.0) {
    throw RejectedRectangle("rectangle extents must be positive (width " + std::to_string(width) +
                            ", height " + std::to_string(height) + ")");
  }
  return {center_row, center_col, normalize_angle(angle), width, height, quality};
}

GraspRectangle parse_rectangle(std::span<const Point, 4> corners) {
  for (const Point& p : corners) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw RejectedRectangle("rectangle corner is not finite");
    }
  }
  const double dx = corners[1].x - corners[0].x, dy = corners[1].y - corners[0].y;
  const double width = std::hypot(dx, dy);
  const double height = std::hypot(corners[2].x - corners[1].x, corners[2].y - corners[1].y);
  if (width < 1e-9 || height < 1e-9) throw RejectedRectangle("degenerate rectangle (zero-length edge)");
  double cx = 0.0, cy = 0.0;
  for (const Point& p : corners) {
    cx += p.x;
    cy += p.y;
  }
  return make_rectangle(cy / 4.0, cx / 4.0, std::atan2(dy, dx), width, height);
}

GraspRectangle center_third(const GraspRectangle& rect) {
  GraspRectangle out = rect;
  out.width = rect.width / 3.0;
  return out;
}

double polygon_area(std::span<const Point> polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % polygon.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2.0;
}

bool contains(std::span<const Point, 4> quad, Point p, double tolerance) {
  bool any_pos = false, any_neg = false;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point a = quad[i], b = quad[(i + 1) % 4];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double side = cross(a, b, p) / (len > 0.0 ? len : 1.0);
    if (side > tolerance) any_pos = true;
    if (side < -tolerance) any_neg = true;
  }
  return !(any_pos && any_neg);
}

GraspMaps::GraspMaps(int h, int w)
    : height(h),
      width(w),
      quality(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0),
      angle_sin(quality.size(), 0.0),
      angle_cos(quality.size(), 0.0),
      width_map(quality.size(), 0.0) {}

GraspMaps rectangles_to_maps(std::span<const GraspRectangle> rects, int height, int width,
                             double width_scale) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("grasp maps need positive size");
  if (!(width_scale > 0.0)) throw std::invalid_argument("width_scale must be positive");
  GraspMaps maps(height, width);
  for (const GraspRectangle& rect : rects) {
    const auto quad = center_third(rect).corners();
    double min_x = quad[0].x, max_x = quad[0].x, min_y = quad[0].y, max_y = quad[0].y;
    for (const Point& p : quad) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    const int r0 = std::max(0, static_cast<int>(std::floor(min_y)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(max_y)));
    const int c0 = std::max(0, static_cast<int>(std::floor(min_x)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(max_x)));
    const double s = std::sin(2.0 * rect.angle), c = std::cos(2.0 * rect.angle);
    const double w = std::min(rect.width / width_scale, 1.0);
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        if (!contains(quad, {static_cast<double>(col), static_cast<double>(r)})) continue;
        const std::size_t i = maps.index(r, col);
        maps.quality[i] = 1.0;
        maps.angle_sin[i] = s;
        maps.angle_cos[i] = c;
        maps.width_map[i] = w;
      }
    }
  }
  return maps;
}

GraspRectangle maps_to_grasp(const GraspMaps& maps, double width_scale) {
  if (maps.size() == 0) throw std::invalid_argument("maps_to_grasp: empty maps");
  std::size_t first = 0;
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (maps.quality[i] > maps.quality[first]) first = i;
  }
  const double peak = maps.quality[first];

  // Flood the 8-connected plateau holding the first maximum.
  std::vector<char> visited(maps.size(), 0);
  std::vector<std::size_t> plateau{first}, frontier{first};
  visited[first] = 1;
  while (!frontier.empty()) {
    const std::size_t i = frontier.back();
    frontier.pop_back();
    const int r = static_cast<int>(i / static_cast<std::size_t>(maps.width));
    const int c = static_cast<int>(i % static_cast<std::size_t>(maps.width));
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nc < 0 || nr >= maps.height || nc >= maps.width) continue;
        const std::size_t j = maps.index(nr, nc);
        if (visited[j] || maps.quality[j] != peak) continue;
        visited[j] = 1;
        plateau.push_back(j);
        frontier.push_back(j);
      }
    }
  }

  double row = static_cast<double>(first / static_cast<std::size_t>(maps.width));
  double col = static_cast<double>(first % static_cast<std::size_t>(maps.width));
  std::size_t at = first;
  if (plateau.size() > 1 && plateau.size() < maps.size()) {
    double sr = 0.0, sc = 0.0;
    for (std::size_t i : plateau) {
      sr += static_cast<double>(i / static_cast<std::size_t>(maps.width));
      sc += static_cast<double>(i % static_cast<std::size_t>(maps.width));
    }
    row = sr / static_cast<double>(plateau.size());
    col = sc / static_cast<double>(plateau.size());
    double best = std::numeric_limits<double>::infinity();
    std::sort(plateau.begin(), plateau.end());
    for (std::size_t i : plateau) {
      const double dr = static_cast<double>(i / static_cast<std::size_t>(maps.width)) - row;
      const double dc = static_cast<double>(i % static_cast<std::size_t>(maps.width)) - col;
      const double d = dr * dr + dc * dc;
      if (d < best) {
        best = d;
        at = i;
      }
    }
  }

  GraspRectangle g;
  g.center_row = row;
  g.center_col = col;
  g.angle = normalize_angle(0.5 * std::atan2(maps.angle_sin[at], maps.angle_cos[at]));
  g.width = std::max(0.0, maps.width_map[at] * width_scale);
  g.height = g.width / 2.0;
  g.quality = peak;
  return g;
}

double jaccard(const GraspRectangle& a, const GraspRectangle& b) {
  const auto pa = counter_clockwise(a.corners());
  const auto pb = counter_clockwise(b.corners());
  const double area_a = polygon_area(pa), area_b = polygon_area(pb);
  const auto inter = clip(pa, pb);
  const double area_i = inter.size() < 3 ? 0.0 : std::abs(polygon_area(inter));
  const double uni = area_a + area_b - area_i;
  if (uni <= 0.0) return 0.0;
  return std::clamp(area_i / uni, 0.0, 1.0);
}

bool is_success(const GraspRectangle& predicted, std::span<const GraspRectangle> ground_truth,
                const SuccessCriterion& criterion) {
  for (const GraspRectangle& g : ground_truth) {
    if (criterion.max_angle_difference &&
        angle_difference(predicted.angle, g.angle) > *criterion.max_angle_difference) {
      continue;
    }
    if (jaccard(predicted, g) > criterion.min_jaccard) return true;
  }
  return false;
}

}  // namespace graspvq
