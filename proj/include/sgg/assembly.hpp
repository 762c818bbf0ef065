#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/box.hpp"
#include "sgg/decoder.hpp"
#include "sgg/metrics.hpp"

namespace sgg {

struct AssemblyConfig {
  double nms_iou = 0.5;     // same-class boxes overlapping above this merge
  double score_floor = 0.05;  // triplets scoring below this are discarded
  int top_m = 1;            // predicate expansion count per surviving slot

  // Throws std::invalid_argument unless 0 < nms_iou < 1, score_floor is a
  // finite non-negative value, and top_m >= 1.
  void validate() const;
};

// Argmax reading of one decoded slot; endpoint scores are the argmax class
// probabilities and the slot score is their product.
struct SlotReading {
  int slot = -1;
  int s_cls = 0, o_cls = 0, p_cls = 0;
  double s_score = 0.0, o_score = 0.0, p_score = 0.0;
  BBox s_box, o_box;

  double score() const { return s_score * o_score * p_score; }
};

// Argmax over every head; slots whose subject, object, or predicate argmax
// lands on the trailing no-relation class are dropped.
std::vector<SlotReading> slot_readings(const std::vector<TripletHypothesis>& hyps);

struct DetectionBox {
  int class_id = 0;
  BBox box;
  double score = 0.0;
};

// Greedy NMS run independently within each class: keep the highest-scoring
// box (ties to the lower index), suppress unkept same-class boxes whose IoU
// with it exceeds iou_thr, repeat. Returns kept indices in ascending input
// order. Scores must be finite.
std::vector<int> nms_per_class(const std::vector<DetectionBox>& boxes, double iou_thr);

struct AssembledGraph {
  struct Node {
    int class_id = 0;
    BBox box;
    double score = 0.0;
  };
  struct Edge {
    int subject = 0, object = 0;  // node indices
    int predicate = 0;
    double score = 0.0;
  };
  std::vector<Node> nodes;
  std::vector<Edge> edges;  // descending score
};

// Maps each reading's subject and object to the same-class node of maximum
// IoU (ties to the lower node index). An endpoint whose best IoU is zero
// gets its own box appended as a singleton node; appended singletons are not
// search targets for later endpoints. Boxes that went through the NMS union
// always overlap a kept box, so assemble() never takes the singleton path.
struct EntityAssignment {
  std::vector<int> subject_node, object_node;  // parallel to the readings
};
EntityAssignment assign_entities(const std::vector<SlotReading>& readings,
                                 std::vector<AssembledGraph::Node>& nodes);

// One pre-dedup edge candidate; slot indexes into the readings.
struct EdgeCandidate {
  int s_node = 0, o_node = 0;
  int predicate = 0;
  double score = 0.0;
  int slot = 0;
};

// Expands each reading into its top_m highest-probability real predicate
// classes (fewer when the class count is smaller), scored as the product of
// the endpoint scores and that predicate's probability.
std::vector<EdgeCandidate> edge_candidates(const std::vector<SlotReading>& readings,
                                           const std::vector<TripletHypothesis>& hyps,
                                           const EntityAssignment& assignment, int top_m);

// Keeps, per ordered node pair, the top_m best-scoring candidates with
// pairwise-distinct predicate classes; result is sorted by descending score.
std::vector<AssembledGraph::Edge> dedup_edges(const std::vector<EdgeCandidate>& candidates,
                                              int top_m);

// Full pipeline over one layer's hypotheses: argmax readings, score floor,
// per-class NMS over the union of subject and object boxes, entity
// assignment, predicate expansion, per-pair dedup.
AssembledGraph assemble(const std::vector<TripletHypothesis>& hyps, const AssemblyConfig& cfg);

// Ranked raw-triplet candidates for recall evaluation: every surviving
// argmax reading expanded to its top_m predicates with the slot's own boxes.
// No NMS and no score floor, so evaluation is unaffected by assembly
// settings other than top_m.
std::vector<ScoredTriplet> scored_triplets(const std::vector<TripletHypothesis>& hyps,
                                           int top_m = 1);

// DOT rendering with nodes labeled "<class>@<step>" and edges labeled with
// the predicate and its score. Empty name tables fall back to "e<i>"/"p<i>".
std::string graph_dot(const AssembledGraph& g, int step,
                      const std::vector<std::string>& entity_names = {},
                      const std::vector<std::string>& predicate_names = {});

nlohmann::json graph_json(const AssembledGraph& g);

}  // namespace sgg
