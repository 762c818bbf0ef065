#include "sgg/box.hpp"

#include <stdexcept>

namespace sgg {

BBox to_center(const CornerBox& c) {
  if (c.x1 > c.x2 || c.y1 > c.y2)
    throw std::invalid_argument("to_center: corners out of order");
  return {0.5f * (c.x1 + c.x2), 0.5f * (c.y1 + c.y2), c.x2 - c.x1, c.y2 - c.y1};
}

static float intersection_area(const CornerBox& a, const CornerBox& b) {
  float ix = std::max(0.f, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  float iy = std::max(0.f, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  return ix * iy;
}

float iou(const CornerBox& a, const CornerBox& b) {
  float inter = intersection_area(a, b);
  float uni = a.area() + b.area() - inter;
  if (uni <= 0.f) throw std::domain_error("iou: zero-area union");
  return inter / uni;
}

float giou(const CornerBox& a, const CornerBox& b) {
  float inter = intersection_area(a, b);
  float uni = a.area() + b.area() - inter;
  CornerBox hull{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
                 std::max(a.y2, b.y2)};
  float hull_area = hull.area();
  if (hull_area <= 0.f) throw std::domain_error("giou: zero-area enclosing box");
  float i = (uni > 0.f) ? inter / uni : 0.f;
  return i - (hull_area - uni) / hull_area;
}

}  // namespace sgg
