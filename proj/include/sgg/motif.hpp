#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgg/decoder.hpp"
#include "sgg/nn.hpp"
#include "sgg/scene_graph.hpp"

namespace sgg {

// Recurrent two-stage model over detector outputs, extended with the same
// iterative refinement scheme as the transformer: T stacked entity/predicate
// networks whose hidden states accumulate residually, with the inputs of
// step t conditioned on the estimates of step t-1.
struct MotifConfig {
  int n_steps = 3;       // refinement steps T; estimates are emitted at each
  int d_feat = 32;       // roi / union feature width, also the entity hidden width
  int d_context = 32;    // contextual representation width, split over two directions
  int d_label = 16;      // label embedding width
  int n_heads = 4;       // heads of the conditioning attention
  float label_noise = 0.2f;    // probability a synthetic detector label is wrong
  float box_jitter = 0.05f;    // relative box perturbation of the synthetic detector
  float feature_noise = 0.05f; // additive noise on synthetic roi / union features

  void validate() const;
};

// What a frozen detector hands the model: per-entity boxes, label
// distributions and roi features, plus union features for every ordered
// entity pair (i = subject, j = object). Synthesized from ground truth here;
// the true classes and per-pair predicates ride along as training targets.
struct DetectorOutput {
  std::vector<BBox> boxes;                  // per entity, left-to-right by center x
  std::vector<std::vector<float>> labels;   // per entity, distribution over eta classes
  std::vector<std::vector<float>> roi;      // per entity, d_feat
  std::vector<std::pair<int, int>> pairs;   // all ordered (subject, object), i != j
  std::vector<std::vector<float>> uni;      // per pair, d_feat
  std::vector<int> target_class;            // per entity, true class
  std::vector<int> target_predicate;        // per pair; upsilon means no relation
  int n_entity_classes = 0;
  int n_predicate_classes = 0;

  int n_entities() const { return static_cast<int>(boxes.size()); }
  int n_pairs() const { return static_cast<int>(pairs.size()); }
  void validate() const;
};

// Pair enumeration is quadratic; scenes stay well under this.
inline constexpr int kMaxDetectorEntities = 8;

// Builds a DetectorOutput from a ground-truth scene: boxes are jittered,
// labels flipped with probability label_noise, and roi / union features are
// a fixed geometry-plus-class layout with additive noise. Entities are
// ordered left to right by jittered box center x. Requires gt.entities.
DetectorOutput synthesize_detector(const SceneGraph& gt, int eta, int upsilon,
                                   const MotifConfig& cfg, Rng& rng);

struct MotifModel {
  MotifConfig cfg;
  int n_entity_classes = 0;     // eta
  int n_predicate_classes = 0;  // upsilon; pair logits carry a trailing no-relation class

  // One refinement step's networks. Contexts and pair projections are
  // per-step; the readout heads below are shared so that a step whose
  // networks are zeroed leaves the running estimates untouched.
  struct StepNets {
    nn::BiLSTM ent_ctx;   // over (z_i, l_i)
    nn::LSTMCell decode;  // label decoder over (c_i, emb(prev label))
    nn::BiLSTM prd_ctx;   // over (c_i, emb(label_i))
    nn::Linear w_h, w_b;  // pair projections of the predicate context
  };
  std::vector<StepNets> steps;

  // Across-step conditioning, shared by all steps: each stage is
  // base + FFN(Attn(base, kv, kv)) with kv drawn from the previous step.
  using CondModule = TripleDecoder::CondModule;
  CondModule cond_z_h, cond_z_g, cond_z_u;  // entity-input stream
  CondModule cond_u_h, cond_u_g, cond_u_z;  // union-input stream

  nn::Linear w_e;                        // entity label readout (d_feat -> eta)
  nn::Linear w_p;                        // predicate readout (d_feat -> upsilon + 1)
  nn::Parameter* label_embed = nullptr;  // (eta + 1, d_label); last row is the begin label

  static MotifModel make(nn::ParamStore& ps, const std::string& prefix, const MotifConfig& cfg,
                         int eta, int upsilon, Rng& rng);

  // One step's tape handles. h and g accumulate across steps; z and u are the
  // (possibly conditioned) inputs the step consumed.
  struct StepOutput {
    Var z, u;
    Var h, g;
    Var ent_logits, ent_prob, ent_logp;  // (n, eta)
    Var prd_logits, prd_prob, prd_logp;  // (pairs, upsilon + 1)
    std::vector<int> labels;             // per-entity argmax estimates
  };
  struct Forward {
    std::vector<StepOutput> steps;  // size T, step order
  };

  // Contextual entity representations: bidirectional pass over the entity
  // sequence joined with the detector label distributions. Throws on n < 1.
  Var entity_context(Tape& t, int step, Var z, Var det_labels, int n) const;

  struct Decode {
    Var h;                   // (n, d_feat), residual on h_prev when given
    Var logits;              // (n, eta)
    std::vector<int> labels; // argmax per entity
  };
  // Sequential label decoding. The label fed at position i is teacher[i-1]
  // when teacher is given, the previous argmax otherwise; position 0 consumes
  // the learned begin-label embedding.
  Decode entity_decode(Tape& t, int step, Var contexts, int n, std::optional<Var> h_prev,
                       const std::vector<int>* teacher) const;

  struct PairScore {
    Var context;  // (n, d_context) contextual predicate representations
    Var g;        // (pairs, d_feat), residual on g_prev when given
    Var logits;   // (pairs, upsilon + 1)
  };
  // Pair representation g = (W_h c_i) * (W_b c_j) * u_{i,j} elementwise, and
  // predicate logits from the shared readout.
  PairScore predicate_context_and_score(Tape& t, int step, Var contexts,
                                        const std::vector<int>& labels, Var u,
                                        const std::vector<std::pair<int, int>>& pairs,
                                        std::optional<Var> g_prev, int n) const;

  // Conditions the raw inputs on the previous step's estimates: three
  // residual stages each for z (kv = h, g, u) and u (kv = h, g, z).
  std::pair<Var, Var> cas_update(Tape& t, const StepOutput& prev) const;

  // One full refinement step over conditioned inputs; prev supplies the
  // running h and g (null for the first step).
  StepOutput residual_step(Tape& t, int step, Var z, Var u, Var det_labels,
                           const std::vector<std::pair<int, int>>& pairs, const StepOutput* prev,
                           const std::vector<int>* teacher) const;

  // Requires at least two entities (the pair streams would be empty).
  // teacher_forcing feeds ground-truth previous labels; inference feeds the
  // model's own argmax.
  Forward forward(Tape& t, const DetectorOutput& det, bool teacher_forcing) const;

  // Per-step triplet hypotheses for the metrics stack: one hypothesis per
  // ordered pair with detector boxes as endpoints. Entity distributions are
  // padded with a zero no-relation slot to match the decoder's layout.
  PredictionSet materialize(Tape& t, const Forward& fwd, const DetectorOutput& det) const;

  // Everything beyond the first step: step networks 2..T plus all six
  // conditioning modules. Zeroing these reduces every step to the baseline.
  std::vector<nn::Parameter*> refinement_parameters() const;
};

// Sum over steps of the mean entity label NLL plus the (optionally
// class-weighted) mean pair predicate NLL. Weights must have upsilon + 1
// strictly positive entries; the weighted mean divides by the summed weights
// of the realized targets.
Var motif_loss(Tape& t, const MotifModel::Forward& fwd, const DetectorOutput& det,
               const std::vector<float>* predicate_weights = nullptr);

}  // namespace sgg
