#pragma once

namespace zsd {

// Center/size box in normalized image coordinates.
struct CenterBox {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

// Corner box (x1 < x2, y1 < y2) in normalized image coordinates.
struct CornerBox {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

inline CornerBox to_corners(const CenterBox& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0,
          b.cy + b.h / 2.0};
}

inline CenterBox to_center(const CornerBox& b) {
  return {(b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0, b.width(), b.height()};
}

// Intersection over union with continuous coordinates; 0 for disjoint boxes.
// Throws std::invalid_argument on a degenerate (zero-area) box.
double iou(const CornerBox& a, const CornerBox& b);

inline double iou(const CenterBox& a, const CenterBox& b) {
  return iou(to_corners(a), to_corners(b));
}

}  // namespace zsd
