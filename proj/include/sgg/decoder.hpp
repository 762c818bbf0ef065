#pragma once

#include <array>
#include <string>
#include <vector>

#include "sgg/box.hpp"
#include "sgg/encoder.hpp"
#include "sgg/nn.hpp"

namespace sgg {

struct DecoderConfig {
  int n_queries = 16;
  int n_layers = 3;  // refinement steps T; a graph estimate is emitted at each
  int d_model = 32;
  int n_heads = 4;
  bool enable_cws = true;  // within-step conditioning of positional encodings
  bool enable_cas = true;  // across-step conditioning of queries

  void validate() const;
};

// One decoded slot: class distributions (entity classes plus a trailing
// no-relation class) and boxes for the subject, object, and predicate.
struct TripletHypothesis {
  std::vector<float> s_dist, o_dist, p_dist;
  BBox s_box, o_box, p_box;
};

struct PredictionSet {
  std::vector<std::vector<TripletHypothesis>> per_layer;  // T x n slots
};

// Tape handles for one refinement step. Probabilities are softmaxed once and
// shared by matching, loss, and materialization; log_probs feed the loss.
struct LayerOutput {
  Var q_s, q_o, q_p;                      // raw decoder outputs (n, d)
  Var s_logits, o_logits, p_logits;       // (n, eta+1) / (n, upsilon+1)
  Var s_prob, o_prob, p_prob;             // softmax rows
  Var s_logp, o_logp, p_logp;             // log-softmax rows
  Var s_box, o_box, p_box;                // (n, 4) in (0,1)
};

struct ForwardResult {
  std::vector<LayerOutput> layers;  // size T, step order
};

// Three synchronized decoders over a shared encoded scene. Each step first
// conditions the queries on the previous step's outputs (across-step), then
// runs subject -> object -> predicate, conditioning each positional encoding
// on the outputs already available within the step (within-step).
struct TripleDecoder {
  DecoderConfig cfg;
  int n_entity_classes = 0;     // eta
  int n_predicate_classes = 0;  // upsilon

  nn::Parameter* pos_s = nullptr;  // learned per-slot positional encodings (n, d)
  nn::Parameter* pos_o = nullptr;
  nn::Parameter* pos_p = nullptr;

  struct Block {
    nn::LayerNorm ln_self;
    nn::MultiHeadAttention self_attn;
    nn::LayerNorm ln_cross;
    nn::MultiHeadAttention cross_attn;
    nn::LayerNorm ln_ffn;
    nn::FeedForward ffn;
  };
  std::array<std::vector<Block>, 3> blocks;  // [decoder s/o/p][layer]

  // Conditioning sub-network: base + FFN(Attn(query, keys, values)). Weights
  // are shared across steps.
  struct CondModule {
    nn::MultiHeadAttention attn;
    nn::FeedForward ffn;

    static CondModule make(nn::ParamStore& ps, const std::string& prefix, int d_model,
                           int n_heads, Rng& rng);
    Var operator()(Tape& t, Var base, Var query, Var keys, Var values) const;
  };
  CondModule cws_o, cws_p;          // positional-encoding conditioning
  CondModule cas_s, cas_o, cas_p;   // query conditioning

  struct Heads {
    nn::LayerNorm norm;  // shared pre-head norm keeps per-step outputs comparable
    nn::Linear cls;
    nn::Linear box1, box2, box3;
  };
  Heads head_s, head_o, head_p;

  static TripleDecoder make(nn::ParamStore& ps, const std::string& prefix,
                            const DecoderConfig& cfg, int eta, int upsilon, Rng& rng);

  // z: encoder output (tokens, d_model).
  ForwardResult forward(Tape& t, Var z) const;

  // Reads the tape values out into plain hypotheses.
  PredictionSet materialize(Tape& t, const ForwardResult& fwd) const;
};

}  // namespace sgg
