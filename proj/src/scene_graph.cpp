#include "sgg/scene_graph.hpp"

#include <array>
#include <cmath>
#include <set>
#include <sstream>

namespace sgg {

static constexpr float kTol = 1e-4f;

static bool box_in_range(const BBox& b) {
  CornerBox c = to_corner(b);
  return b.w >= 0.f && b.h >= 0.f && c.x1 >= -kTol && c.y1 >= -kTol && c.x2 <= 1.f + kTol &&
         c.y2 <= 1.f + kTol;
}

static bool box_close(const BBox& a, const BBox& b) {
  return std::fabs(a.cx - b.cx) <= kTol && std::fabs(a.cy - b.cy) <= kTol &&
         std::fabs(a.w - b.w) <= kTol && std::fabs(a.h - b.h) <= kTol;
}

std::vector<std::string> validate_graph(const SceneGraph& g, int eta, int upsilon) {
  std::vector<std::string> out;
  auto fail = [&](int i, const std::string& msg) {
    std::ostringstream ss;
    ss << "triplet " << i << ": " << msg;
    out.push_back(ss.str());
  };

  if (g.entities) {
    for (size_t j = 0; j < g.entities->size(); ++j) {
      const EntityInstance& e = (*g.entities)[j];
      if (e.class_id < 0 || e.class_id >= eta) {
        std::ostringstream ss;
        ss << "entity " << j << ": class " << e.class_id << " outside [0, " << eta << ")";
        out.push_back(ss.str());
      }
      if (!box_in_range(e.box) || e.box.w <= 0.f || e.box.h <= 0.f) {
        std::ostringstream ss;
        ss << "entity " << j << ": degenerate or out-of-range box";
        out.push_back(ss.str());
      }
    }
  }

  std::set<std::array<int, 3>> seen;
  for (size_t i = 0; i < g.triplets.size(); ++i) {
    const Triplet& t = g.triplets[i];
    int idx = static_cast<int>(i);
    if (t.subject.class_id < 0 || t.subject.class_id >= eta)
      fail(idx, "subject class out of range");
    if (t.object.class_id < 0 || t.object.class_id >= eta) fail(idx, "object class out of range");
    if (t.predicate_class < 0 || t.predicate_class >= upsilon)
      fail(idx, "predicate class out of range");
    if (!box_in_range(t.subject.box) || t.subject.box.w <= 0.f || t.subject.box.h <= 0.f)
      fail(idx, "bad subject box");
    if (!box_in_range(t.object.box) || t.object.box.w <= 0.f || t.object.box.h <= 0.f)
      fail(idx, "bad object box");
    if (!box_close(t.predicate_box, predicate_box_of(t.subject.box, t.object.box)))
      fail(idx, "predicate box does not match its endpoints");

    if (g.entities) {
      int n = static_cast<int>(g.entities->size());
      bool nodes_ok = true;
      if (t.subject_node < 0 || t.subject_node >= n) {
        fail(idx, "subject node index out of range");
        nodes_ok = false;
      } else {
        const EntityInstance& e = (*g.entities)[t.subject_node];
        if (e.class_id != t.subject.class_id || !box_close(e.box, t.subject.box))
          fail(idx, "subject disagrees with its node record");
      }
      if (t.object_node < 0 || t.object_node >= n) {
        fail(idx, "object node index out of range");
        nodes_ok = false;
      } else {
        const EntityInstance& e = (*g.entities)[t.object_node];
        if (e.class_id != t.object.class_id || !box_close(e.box, t.object.box))
          fail(idx, "object disagrees with its node record");
      }
      if (nodes_ok && !seen.insert({t.subject_node, t.object_node, t.predicate_class}).second)
        fail(idx, "duplicate (subject node, object node, predicate) triple");
    }
  }
  return out;
}

}  // namespace sgg
