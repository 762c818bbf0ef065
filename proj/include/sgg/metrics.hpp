#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/box.hpp"
#include "sgg/dataset.hpp"
#include "sgg/scene_graph.hpp"

namespace sgg {

// One ranked relation prediction. Only the subject and object geometry takes
// part in matching; predicate localization is not scored.
struct ScoredTriplet {
  int s_class = 0;
  int p_class = 0;
  int o_class = 0;
  BBox s_box, o_box;
  double score = 0.0;
};

// Ground truth plus the ranked predictions for one scene. Every metric below
// expects preds sorted by descending score; evaluate_recalls sorts its own
// copy, direct callers must pre-sort.
struct SceneResult {
  SceneGraph gt;
  std::vector<ScoredTriplet> preds;
};

// Greedy top-down matching: walk predictions in rank order; each one claims
// the first still-unmatched ground-truth triplet with equal (s, p, o) classes
// and subject/object IoU >= iou_thr, and claims at most one. Returns one flag
// per ground-truth triplet. Deliberately not an optimal bipartite matching.
std::vector<bool> match_triplets(const SceneGraph& gt, const std::vector<ScoredTriplet>& preds,
                                 double iou_thr = 0.5);

// Mean over scenes of (#matched GT / #GT) using the top-k predictions.
// Scenes without ground truth are skipped, not counted as zero. Throws
// std::runtime_error("no ground truth") when every scene is empty and
// std::invalid_argument when k < 1.
double recall_at_k(const std::vector<SceneResult>& scenes, int k, double iou_thr = 0.5);

// Per predicate class: recall pooled within each scene containing the class,
// then averaged over those scenes. Classes absent from all ground truth stay
// null; value is the mean over the non-null classes (0 when there are none).
struct MeanRecall {
  double value = 0.0;
  std::vector<std::optional<double>> per_class;
};
MeanRecall mean_recall_at_k(const std::vector<SceneResult>& scenes, int k,
                            int n_predicate_classes, double iou_thr = 0.5);

// 2*m*r / (m + r); 0 when both are 0. Scale-invariant, so it accepts either
// [0, 1] fractions or percentages.
double harmonic_recall(double mean_recall, double recall);

// Recall restricted to ground-truth triplets whose (s, p, o) class triple
// never occurs in the registry. Matching still runs against the full ground
// truth so seen triplets can consume predictions. scenes_counted is the
// number of scenes holding at least one unseen triplet; value is null when
// it is zero.
struct ZeroShotRecall {
  std::optional<double> value;
  int scenes_counted = 0;
};
ZeroShotRecall zero_shot_recall(const std::vector<SceneResult>& scenes,
                                const TripletRegistry& registry, int k, double iou_thr = 0.5);

// Mean per-class recall within each frequency subset; null entries of
// per_class are skipped, and a subset left with nothing is null. Throws
// std::invalid_argument when a partition id falls outside per_class.
struct HbtRecalls {
  std::optional<double> head, body, tail;
};
HbtRecalls hbt_report(const std::vector<std::optional<double>>& per_class,
                      const HBTPartition& partition);

struct RecallReport {
  struct AtK {
    int k = 0;
    double recall = 0.0;
    MeanRecall mean;
    double harmonic = 0.0;
    ZeroShotRecall zero_shot;
    HbtRecalls hbt;
  };
  int scenes = 0;
  std::vector<AtK> at;
};

// Full evaluation pass over one split. Stable-sorts each scene's predictions
// by descending score, then fills one AtK block per requested k. registry
// and partition may be null, which leaves the zero-shot and subset fields
// null.
RecallReport evaluate_recalls(std::vector<SceneResult> scenes, const std::vector<int>& ks,
                              int n_predicate_classes, const TripletRegistry* registry,
                              const HBTPartition* partition, double iou_thr = 0.5);

// All recall values scaled to percentages; undefined entries are null.
nlohmann::json report_json(const RecallReport& r);

// Fixed-width percentage table, one row per k:
//   K   mR@K    R@K   hR@K   head   body   tail
std::string report_table(const RecallReport& r);

}  // namespace sgg
