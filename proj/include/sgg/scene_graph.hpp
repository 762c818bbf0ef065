#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgg/box.hpp"

namespace sgg {

struct EntityRef {
  int class_id = 0;
  BBox box;
};

// One (subject, predicate, object) relation with localized endpoints.
// subject_node / object_node index into SceneGraph::entities when that list
// is present; -1 otherwise.
struct Triplet {
  EntityRef subject;
  EntityRef object;
  int predicate_class = 0;
  BBox predicate_box;
  int subject_node = -1;
  int object_node = -1;
};

struct EntityInstance {
  int class_id = 0;
  BBox box;
};

struct SceneGraph {
  std::string scene_id;
  std::vector<Triplet> triplets;
  std::optional<std::vector<EntityInstance>> entities;
};

// Structural checks: class ids in range, boxes non-degenerate and inside the
// unit square, node references consistent, predicate boxes equal the union
// of their endpoints. Returns one message per violation; empty means valid.
std::vector<std::string> validate_graph(const SceneGraph& g, int eta, int upsilon);

}  // namespace sgg
