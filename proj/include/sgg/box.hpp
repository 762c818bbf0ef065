#pragma once

#include <algorithm>

namespace sgg {

// Axis-aligned box in center format (cx, cy, w, h), coordinates normalized
// to [0, 1] relative to the scene extent. Canonical internal form; corner
// form exists only at IO and geometry boundaries.
struct BBox {
  float cx = 0.f, cy = 0.f, w = 0.f, h = 0.f;

  float area() const { return w * h; }
  bool operator==(const BBox&) const = default;
};

// Corner format (x1, y1, x2, y2) with x1 <= x2, y1 <= y2.
struct CornerBox {
  float x1 = 0.f, y1 = 0.f, x2 = 0.f, y2 = 0.f;

  float area() const { return (x2 - x1) * (y2 - y1); }
};

inline CornerBox to_corner(const BBox& b) {
  return {b.cx - 0.5f * b.w, b.cy - 0.5f * b.h, b.cx + 0.5f * b.w, b.cy + 0.5f * b.h};
}

// Throws std::invalid_argument when x1 > x2 or y1 > y2.
BBox to_center(const CornerBox& c);

// Throws std::domain_error when the union area is zero (both degenerate).
float iou(const CornerBox& a, const CornerBox& b);
// Throws std::domain_error when the enclosing box has zero area.
float giou(const CornerBox& a, const CornerBox& b);

inline float iou(const BBox& a, const BBox& b) { return iou(to_corner(a), to_corner(b)); }
inline float giou(const BBox& a, const BBox& b) { return giou(to_corner(a), to_corner(b)); }

// The box whose two diagonally opposite corners are the centers of s and o.
// Degenerate (w = 0 or h = 0) when the centers share a coordinate.
inline BBox predicate_box_of(const BBox& s, const BBox& o) {
  CornerBox c{std::min(s.cx, o.cx), std::min(s.cy, o.cy), std::max(s.cx, o.cx),
              std::max(s.cy, o.cy)};
  return {0.5f * (c.x1 + c.x2), 0.5f * (c.y1 + c.y2), c.x2 - c.x1, c.y2 - c.y1};
}

}  // namespace sgg
