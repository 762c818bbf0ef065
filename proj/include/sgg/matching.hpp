#pragma once

#include <array>
#include <vector>

#include "sgg/dataset.hpp"
#include "sgg/decoder.hpp"
#include "sgg/scene_graph.hpp"

namespace sgg {

// One assignment target: a ground-truth triplet, or the empty slot that pads
// the target list out to the query count. Empty slots carry no boxes and
// their class terms target the trailing no-relation class of each head.
struct TargetTriplet {
  int s_class = -1, o_class = -1, p_class = -1;  // -1 on empty slots
  BBox s_box, o_box, p_box;

  bool empty() const { return p_class < 0; }
};

// First g.triplets.size() slots are the ground truth in order, the rest
// empty padding. Throws std::invalid_argument when the scene has more
// triplets than slots.
std::vector<TargetTriplet> pad_targets(const SceneGraph& g, int n_slots);

// Per-predicate-class loss weights w[c] = max{(alpha / f_c)^beta, 1}.
// alpha = 0 gives all ones. A class with zero training frequency gets an
// infinite weight here; using it as a target fails at loss time, not here.
// Throws std::invalid_argument on alpha < 0, or beta <= 0 when alpha > 0.
std::vector<float> class_weights(const FrequencyTable& freq, double alpha, double beta);

// Matching cost between one target and one decoded slot: the negated sum of
// the three class probabilities at the target classes, plus the weighted box
// losses lambda_l1 * L1 + lambda_giou * (1 - GIoU) for each of the three
// boxes. Empty targets cost exactly zero. A perfect hypothesis costs -3.
double rel_cost(const TargetTriplet& target, const TripletHypothesis& hyp,
                double lambda_l1 = 5.0, double lambda_giou = 2.0);

// Exact minimum-cost assignment of a square cost matrix, row -> column.
// Among equal-cost optima returns the lexicographically smallest map, so
// ties resolve toward low column indices.
std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& cost);

// One assignment shared by every layer, minimizing the per-layer relation
// costs summed into a single matrix. Throws std::domain_error on non-finite
// cost entries.
std::vector<int> joint_match(const std::vector<TargetTriplet>& targets,
                             const PredictionSet& preds, double lambda_l1 = 5.0,
                             double lambda_giou = 2.0);

// Ablation wiring: each layer solved on its own cost matrix.
std::vector<std::vector<int>> per_layer_match(const std::vector<TargetTriplet>& targets,
                                              const PredictionSet& preds,
                                              double lambda_l1 = 5.0,
                                              double lambda_giou = 2.0);

struct LossParams {
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  double eos_coef = 0.1;  // down-weight of empty-slot class terms
  // Per real predicate class; empty means all ones.
  std::vector<float> predicate_weights;
};

// Unweighted per-term sums; the lambda weights apply at recombination.
struct LossTerms {
  double cls = 0.0, l1 = 0.0, giou = 0.0;
};

struct LossBreakdown {
  std::vector<std::array<LossTerms, 3>> per_layer;  // [t][subject, object, predicate]
  double total = 0.0;  // sum over t and components of cls + l_l1*l1 + l_giou*giou
  Var total_var{};     // same scalar on the tape; feeds backward()
};

// Classification negative log likelihood over every slot at every layer
// (empty slots target the no-relation class, scaled by eos_coef; predicate
// terms additionally scaled per class), box terms over matched real slots
// only. sigma maps target index -> prediction slot and is shared across
// layers; gradients flow through the selected terms while the assignment
// itself stays fixed. Throws std::runtime_error with slot diagnostics when a
// selected log probability or class weight is non-finite.
LossBreakdown layer_losses(Tape& t, const ForwardResult& fwd,
                           const std::vector<TargetTriplet>& targets,
                           const std::vector<int>& sigma, const LossParams& params);

}  // namespace sgg
