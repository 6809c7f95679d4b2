#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

// Oriented grasp rectangles and per-pixel grasp maps.
//
// Coordinates are continuous image coordinates with x = column and y = row;
// pixel (r, c) has its centre at (x = c, y = r). Angles are measured from the
// +x axis towards +y and describe the direction in which the gripper opens.
namespace graspvq {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

class RejectedRectangle : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Maps any angle into [-pi/2, pi/2); a parallel gripper is symmetric under pi.
double normalize_angle(double angle);

struct GraspRectangle {
  double center_row = 0.0;
  double center_col = 0.0;
  double angle = 0.0;   // radians in [-pi/2, pi/2)
  double width = 1.0;   // gripper opening, along the angle direction
  double height = 1.0;  // jaw size, perpendicular to the opening
  double quality = 1.0;

  /// Corners p0..p3; p0->p1 runs along the opening, p1->p2 across it.
  std::array<Point, 4> corners() const;
};

/// Validates and normalizes; throws RejectedRectangle on bad extents.
GraspRectangle make_rectangle(double center_row, double center_col, double angle, double width,
                              double height, double quality = 1.0);

/// Cornell corner quadruple -> rectangle. The first edge (corner 0 to 1) is
/// the opening axis; the second edge gives the jaw size.
GraspRectangle parse_rectangle(std::span<const Point, 4> corners);

/// Middle third of the rectangle along the opening axis.
GraspRectangle center_third(const GraspRectangle& rect);

double polygon_area(std::span<const Point> polygon);
bool contains(std::span<const Point, 4> quad, Point p, double tolerance = 1e-9);

/// Per-pixel grasp maps (row-major, height x width each). The angle is kept
/// as the continuous pair (sin 2a, cos 2a).
struct GraspMaps {
  int height = 0;
  int width = 0;
  std::vector<double> quality;
  std::vector<double> angle_sin;
  std::vector<double> angle_cos;
  std::vector<double> width_map;

  GraspMaps() = default;
  GraspMaps(int h, int w);
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  std::size_t size() const { return quality.size(); }
};

inline constexpr double kDefaultWidthScale = 150.0;

/// Label maps: pixels whose centre lies in a rectangle's centre third get
/// quality 1 and that rectangle's angle/width. Later rectangles win.
GraspMaps rectangles_to_maps(std::span<const GraspRectangle> rects, int height, int width,
                             double width_scale = kDefaultWidthScale);

/// Best grasp at the quality maximum. When the maximum is attained on a flat
/// plateau the grasp is placed at the centroid of the connected plateau
/// containing the first maximum in row-major order; a plateau spanning the
/// whole map yields that first maximum itself. Height is set to width / 2.
GraspRectangle maps_to_grasp(const GraspMaps& maps, double width_scale = kDefaultWidthScale);

/// Intersection over union by convex polygon clipping.
double jaccard(const GraspRectangle& a, const GraspRectangle& b);

struct SuccessCriterion {
  double min_jaccard = 0.25;
  // Off by default; when set, |angle difference| (mod pi) must also be below it.
  std::optional<double> max_angle_difference;
};

bool is_success(const GraspRectangle& predicted, std::span<const GraspRectangle> ground_truth,
                const SuccessCriterion& criterion = {});

}  // namespace graspvq
