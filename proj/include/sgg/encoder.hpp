#pragma once

#include <string>
#include <vector>

#include "sgg/dataset.hpp"
#include "sgg/nn.hpp"

namespace sgg {

// The model layer lives in sgg and speaks the autodiff vocabulary directly.
using nn::Tape;
using nn::Tensor;
using nn::Var;

struct EncoderConfig {
  int d_model = 32;
  int n_layers = 2;  // 0 leaves the embedded sequence untouched (test hook)
  int n_heads = 4;

  void validate() const;
};

// Fixed 2D sinusoidal position encodings, one row per grid cell in row-major
// (y, x) order. The first half of the channels encodes y, the second half x.
Tensor sinusoidal_grid_encoding(int h, int w, int d_model);

// Turns a feature grid into the flattened position-aware sequence the
// decoders cross-attend to: per-cell linear embedding plus fixed position
// encodings, then a stack of pre-norm self-attention + feed-forward blocks.
struct Encoder {
  EncoderConfig cfg;
  int in_channels = 0;
  nn::Linear embed;
  struct Block {
    nn::LayerNorm ln_attn;
    nn::MultiHeadAttention attn;
    nn::LayerNorm ln_ffn;
    nn::FeedForward ffn;
  };
  std::vector<Block> blocks;

  static Encoder make(nn::ParamStore& ps, const std::string& prefix, int in_channels,
                      const EncoderConfig& cfg, Rng& rng);

  // (grid_h * grid_w, d_model); throws on a channel-count mismatch.
  Var embed_grid(Tape& t, const FeatureGrid& grid) const;
  Var encode(Tape& t, Var embedded) const;
  Var operator()(Tape& t, const FeatureGrid& grid) const {
    return encode(t, embed_grid(t, grid));
  }
};

}  // namespace sgg
