#include "sgg/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace sgg {

namespace {

int argmax(const std::vector<float>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// real predicate classes of one slot ranked by probability, ties to the
// lower class id
std::vector<int> top_predicates(const std::vector<float>& p_dist, int m) {
  int upsilon = static_cast<int>(p_dist.size()) - 1;
  std::vector<int> order(upsilon);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (p_dist[a] != p_dist[b]) return p_dist[a] > p_dist[b];
    return a < b;
  });
  order.resize(std::min<size_t>(order.size(), static_cast<size_t>(m)));
  return order;
}

std::string node_label(int class_id, int step, const std::vector<std::string>& names) {
  std::string cls = static_cast<size_t>(class_id) < names.size()
                        ? names[class_id]
                        : "e" + std::to_string(class_id);
  return cls + "@" + std::to_string(step);
}

}  // namespace

void AssemblyConfig::validate() const {
  if (!(nms_iou > 0.0 && nms_iou < 1.0))
    throw std::invalid_argument("nms_iou must lie strictly between 0 and 1");
  if (!std::isfinite(score_floor) || score_floor < 0.0)
    throw std::invalid_argument("score_floor must be finite and non-negative");
  if (top_m < 1) throw std::invalid_argument("top_m must be at least 1");
}

std::vector<SlotReading> slot_readings(const std::vector<TripletHypothesis>& hyps) {
  std::vector<SlotReading> out;
  for (size_t i = 0; i < hyps.size(); ++i) {
    const TripletHypothesis& h = hyps[i];
    SlotReading r;
    r.slot = static_cast<int>(i);
    r.s_cls = argmax(h.s_dist);
    r.o_cls = argmax(h.o_dist);
    r.p_cls = argmax(h.p_dist);
    if (r.s_cls == static_cast<int>(h.s_dist.size()) - 1 ||
        r.o_cls == static_cast<int>(h.o_dist.size()) - 1 ||
        r.p_cls == static_cast<int>(h.p_dist.size()) - 1)
      continue;  // some head predicts no relation
    r.s_score = h.s_dist[r.s_cls];
    r.o_score = h.o_dist[r.o_cls];
    r.p_score = h.p_dist[r.p_cls];
    r.s_box = h.s_box;
    r.o_box = h.o_box;
    out.push_back(r);
  }
  return out;
}

std::vector<int> nms_per_class(const std::vector<DetectionBox>& boxes, double iou_thr) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (boxes[a].score != boxes[b].score) return boxes[a].score > boxes[b].score;
    return a < b;
  });
  std::vector<bool> suppressed(boxes.size(), false);
  std::vector<int> kept;
  for (size_t i = 0; i < order.size(); ++i) {
    int a = order[i];
    if (suppressed[a]) continue;
    kept.push_back(a);
    for (size_t j = i + 1; j < order.size(); ++j) {
      int b = order[j];
      if (suppressed[b] || boxes[b].class_id != boxes[a].class_id) continue;
      if (iou(boxes[a].box, boxes[b].box) > iou_thr) suppressed[b] = true;
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

EntityAssignment assign_entities(const std::vector<SlotReading>& readings,
                                 std::vector<AssembledGraph::Node>& nodes) {
  size_t frozen = nodes.size();
  auto place = [&](int cls, const BBox& b, double score) {
    int best = -1;
    float best_iou = 0.f;
    for (size_t j = 0; j < frozen; ++j) {
      if (nodes[j].class_id != cls) continue;
      float v = iou(nodes[j].box, b);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) return best;
    nodes.push_back({cls, b, score});
    return static_cast<int>(nodes.size()) - 1;
  };
  EntityAssignment out;
  for (const SlotReading& r : readings) {
    out.subject_node.push_back(place(r.s_cls, r.s_box, r.s_score));
    out.object_node.push_back(place(r.o_cls, r.o_box, r.o_score));
  }
  return out;
}

std::vector<EdgeCandidate> edge_candidates(const std::vector<SlotReading>& readings,
                                           const std::vector<TripletHypothesis>& hyps,
                                           const EntityAssignment& assignment, int top_m) {
  std::vector<EdgeCandidate> out;
  for (size_t i = 0; i < readings.size(); ++i) {
    const SlotReading& r = readings[i];
    const std::vector<float>& pd = hyps[r.slot].p_dist;
    for (int p : top_predicates(pd, top_m)) {
      EdgeCandidate c;
      c.s_node = assignment.subject_node[i];
      c.o_node = assignment.object_node[i];
      c.predicate = p;
      c.score = r.s_score * r.o_score * static_cast<double>(pd[p]);
      c.slot = static_cast<int>(i);
      out.push_back(c);
    }
  }
  return out;
}

std::vector<AssembledGraph::Edge> dedup_edges(const std::vector<EdgeCandidate>& candidates,
                                              int top_m) {
  std::map<std::pair<int, int>, std::vector<EdgeCandidate>> by_pair;
  for (const EdgeCandidate& c : candidates) by_pair[{c.s_node, c.o_node}].push_back(c);
  std::vector<AssembledGraph::Edge> edges;
  for (auto& [pair, group] : by_pair) {
    std::sort(group.begin(), group.end(), [](const EdgeCandidate& a, const EdgeCandidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.predicate != b.predicate) return a.predicate < b.predicate;
      return a.slot < b.slot;
    });
    std::vector<int> taken;
    for (const EdgeCandidate& c : group) {
      if (static_cast<int>(taken.size()) == top_m) break;
      if (std::find(taken.begin(), taken.end(), c.predicate) != taken.end()) continue;
      taken.push_back(c.predicate);
      edges.push_back({pair.first, pair.second, c.predicate, c.score});
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const AssembledGraph::Edge& a, const AssembledGraph::Edge& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.subject != b.subject) return a.subject < b.subject;
              if (a.object != b.object) return a.object < b.object;
              return a.predicate < b.predicate;
            });
  return edges;
}

AssembledGraph assemble(const std::vector<TripletHypothesis>& hyps, const AssemblyConfig& cfg) {
  cfg.validate();
  std::vector<SlotReading> readings;
  for (SlotReading& r : slot_readings(hyps))
    if (r.score() >= cfg.score_floor) readings.push_back(r);

  std::vector<DetectionBox> detections;
  for (const SlotReading& r : readings) {
    detections.push_back({r.s_cls, r.s_box, r.s_score});
    detections.push_back({r.o_cls, r.o_box, r.o_score});
  }
  AssembledGraph g;
  for (int k : nms_per_class(detections, cfg.nms_iou))
    g.nodes.push_back({detections[k].class_id, detections[k].box, detections[k].score});

  EntityAssignment assignment = assign_entities(readings, g.nodes);
  g.edges = dedup_edges(edge_candidates(readings, hyps, assignment, cfg.top_m), cfg.top_m);
  return g;
}

std::vector<ScoredTriplet> scored_triplets(const std::vector<TripletHypothesis>& hyps,
                                           int top_m) {
  if (top_m < 1) throw std::invalid_argument("top_m must be at least 1");
  std::vector<ScoredTriplet> out;
  for (const SlotReading& r : slot_readings(hyps)) {
    const std::vector<float>& pd = hyps[r.slot].p_dist;
    for (int p : top_predicates(pd, top_m)) {
      ScoredTriplet t;
      t.s_class = r.s_cls;
      t.p_class = p;
      t.o_class = r.o_cls;
      t.s_box = r.s_box;
      t.o_box = r.o_box;
      t.score = r.s_score * r.o_score * static_cast<double>(pd[p]);
      out.push_back(t);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredTriplet& a, const ScoredTriplet& b) { return a.score > b.score; });
  return out;
}

std::string graph_dot(const AssembledGraph& g, int step,
                      const std::vector<std::string>& entity_names,
                      const std::vector<std::string>& predicate_names) {
  std::string out = "digraph scene_graph {\n  rankdir=LR;\n  node [shape=box];\n";
  for (size_t i = 0; i < g.nodes.size(); ++i)
    out += "  n" + std::to_string(i) + " [label=\"" +
           node_label(g.nodes[i].class_id, step, entity_names) + "\"];\n";
  for (const AssembledGraph::Edge& e : g.edges) {
    std::string pred = static_cast<size_t>(e.predicate) < predicate_names.size()
                           ? predicate_names[e.predicate]
                           : "p" + std::to_string(e.predicate);
    char score[16];
    std::snprintf(score, sizeof score, "%.2f", e.score);
    out += "  n" + std::to_string(e.subject) + " -> n" + std::to_string(e.object) + " [label=\"" +
           pred + " " + score + "\"];\n";
  }
  out += "}\n";
  return out;
}

nlohmann::json graph_json(const AssembledGraph& g) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const AssembledGraph::Node& n : g.nodes)
    j["nodes"].push_back({{"class", n.class_id},
                          {"box", {n.box.cx, n.box.cy, n.box.w, n.box.h}},
                          {"score", n.score}});
  j["edges"] = nlohmann::json::array();
  for (const AssembledGraph::Edge& e : g.edges)
    j["edges"].push_back({{"subject", e.subject},
                          {"object", e.object},
                          {"predicate", e.predicate},
                          {"score", e.score}});
  return j;
}

}  // namespace sgg
