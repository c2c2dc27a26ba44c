#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "nextact/common.hpp"

namespace nextact {

// Axis-aligned box in corner form. Coordinates may be normalized or absolute;
// the math is scale-free.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool valid() const { return x1 >= x0 && y1 >= y0; }

  bool operator==(const Box& o) const {
    return x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
  }
};

inline void check_box(const Box& b, const char* who) {
  if (!b.valid())
    throw ValidationError(std::string(who) + ": invalid box (" + std::to_string(b.x0) + "," +
                          std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
                          std::to_string(b.y1) + ")");
}

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return w > 0 && h > 0 ? w * h : 0.0;
}

// Intersection over union; 0 when the union is empty.
inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// IoU minus the normalized empty area of the smallest enclosing box; in (-1,1].
inline double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull_w = std::max(a.x1, b.x1) - std::min(a.x0, b.x0);
  const double hull_h = std::max(a.y1, b.y1) - std::min(a.y0, b.y0);
  const double hull = hull_w * hull_h;
  const double i = uni > 0 ? inter / uni : 0.0;
  return hull > 0 ? i - (hull - uni) / hull : i;
}

inline double l1_distance(const Box& a, const Box& b) {
  return std::abs(a.x0 - b.x0) + std::abs(a.y0 - b.y0) + std::abs(a.x1 - b.x1) +
         std::abs(a.y1 - b.y1);
}

inline Box cxcywh_to_xyxy(double cx, double cy, double w, double h) {
  return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

// (cx, cy, w, h)
inline std::array<double, 4> xyxy_to_cxcywh(const Box& b) {
  return {b.cx(), b.cy(), b.width(), b.height()};
}

inline Box clamp_unit(const Box& b) {
  auto cl = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return Box{cl(b.x0), cl(b.y0), cl(b.x1), cl(b.y1)};
}

}  // namespace nextact
