#include "sgg/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace sgg {

void EncoderConfig::validate() const {
  if (d_model < 4 || d_model % 4 != 0)
    throw std::invalid_argument("EncoderConfig: d_model must be a positive multiple of 4");
  if (n_heads < 1 || d_model % n_heads != 0)
    throw std::invalid_argument("EncoderConfig: n_heads must divide d_model");
  if (n_layers < 0) throw std::invalid_argument("EncoderConfig: n_layers must be >= 0");
}

Tensor sinusoidal_grid_encoding(int h, int w, int d_model) {
  if (d_model % 4 != 0)
    throw std::invalid_argument("sinusoidal_grid_encoding: d_model must be a multiple of 4");
  Tensor pe(h * w, d_model);
  int half = d_model / 2, quarter = d_model / 4;
  constexpr double kTwoPi = 6.283185307179586;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double py = (y + 0.5) / h * kTwoPi;
      double px = (x + 0.5) / w * kTwoPi;
      int row = y * w + x;
      for (int i = 0; i < quarter; ++i) {
        double div = std::pow(10000.0, 2.0 * i / half);
        pe.at(row, 2 * i) = static_cast<float>(std::sin(py / div));
        pe.at(row, 2 * i + 1) = static_cast<float>(std::cos(py / div));
        pe.at(row, half + 2 * i) = static_cast<float>(std::sin(px / div));
        pe.at(row, half + 2 * i + 1) = static_cast<float>(std::cos(px / div));
      }
    }
  }
  return pe;
}

Encoder Encoder::make(nn::ParamStore& ps, const std::string& prefix, int in_channels,
                      const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  Encoder e;
  e.cfg = cfg;
  e.in_channels = in_channels;
  e.embed = nn::Linear::make(ps, prefix + ".embed", in_channels, cfg.d_model, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string bp = prefix + ".block" + std::to_string(l);
    Block b;
    b.ln_attn = nn::LayerNorm::make(ps, bp + ".ln_attn", cfg.d_model);
    b.attn = nn::MultiHeadAttention::make(ps, bp + ".attn", cfg.d_model, cfg.n_heads, rng);
    b.ln_ffn = nn::LayerNorm::make(ps, bp + ".ln_ffn", cfg.d_model);
    b.ffn = nn::FeedForward::make(ps, bp + ".ffn", cfg.d_model, rng);
    e.blocks.push_back(b);
  }
  return e;
}

Var Encoder::embed_grid(Tape& t, const FeatureGrid& grid) const {
  if (grid.c != in_channels)
    throw std::invalid_argument("embed_grid: grid channel count does not match the encoder");
  Tensor tokens(grid.h * grid.w, grid.c);
  for (int y = 0; y < grid.h; ++y)
    for (int x = 0; x < grid.w; ++x)
      for (int ch = 0; ch < grid.c; ++ch) tokens.at(y * grid.w + x, ch) = grid.at(ch, y, x);
  Var projected = embed(t, t.input(tokens));
  return t.add(projected, t.input(sinusoidal_grid_encoding(grid.h, grid.w, cfg.d_model)));
}

Var Encoder::encode(Tape& t, Var embedded) const {
  Var x = embedded;
  for (const Block& b : blocks) {
    Var normed = b.ln_attn(t, x);
    x = t.add(x, b.attn(t, normed, normed, normed));
    x = t.add(x, b.ffn(t, b.ln_ffn(t, x)));
  }
  return x;
}

}  // namespace sgg
