#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgg/tape.hpp"
#include "sgg/util.hpp"

namespace sgg::nn {

// Owns every Parameter of a model. Names are unique and stable; checkpoint
// io and the optimizer iterate the store in insertion order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, int rows, int cols) {
    return emplace(name, Tensor(rows, cols));
  }
  Parameter& add_xavier(const std::string& name, int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    double limit = std::sqrt(6.0 / (rows + cols));
    for (float& x : t.data) x = static_cast<float>(rng.uniform(-limit, limit));
    return emplace(name, std::move(t));
  }
  Parameter& add_normal(const std::string& name, int rows, int cols, float stdev, Rng& rng) {
    Tensor t(rows, cols);
    for (float& x : t.data) x = static_cast<float>(rng.normal()) * stdev;
    return emplace(name, std::move(t));
  }
  Parameter& add_const(const std::string& name, int rows, int cols, float v) {
    return emplace(name, Tensor::full(rows, cols, v));
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::vector<Parameter*> all() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.f);
  }

  int64_t total_floats() const {
    int64_t n = 0;
    for (auto& p : params_) n += p->value.numel();
    return n;
  }

 private:
  Parameter& emplace(const std::string& name, Tensor t) {
    if (find(name)) throw std::runtime_error("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(t)));
    return *params_.back();
  }
  // find() is called during construction only; linear scan is fine.
  Parameter* find(const std::string& name) const {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Linear {
  Parameter* W = nullptr;  // (in, out)
  Parameter* b = nullptr;  // (1, out)

  static Linear make(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
    Linear l;
    l.W = &ps.add_xavier(prefix + ".w", in, out, rng);
    l.b = &ps.add(prefix + ".b", 1, out);
    return l;
  }
  Var operator()(Tape& t, Var x) const { return t.add(t.matmul(x, t.param(*W)), t.param(*b)); }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm make(ParamStore& ps, const std::string& prefix, int dim) {
    LayerNorm ln;
    ln.gain = &ps.add_const(prefix + ".gain", 1, dim, 1.f);
    ln.bias = &ps.add(prefix + ".bias", 1, dim);
    return ln;
  }
  Var operator()(Tape& t, Var x) const {
    return t.layernorm_rows(x, t.param(*gain), t.param(*bias));
  }
};

// Multi-head scaled dot-product attention, d_model split evenly over heads.
struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int d_model = 0, n_heads = 0;

  static MultiHeadAttention make(ParamStore& ps, const std::string& prefix, int d_model,
                                 int n_heads, Rng& rng) {
    if (d_model % n_heads != 0) throw std::invalid_argument("d_model must divide by n_heads");
    MultiHeadAttention m;
    m.d_model = d_model;
    m.n_heads = n_heads;
    m.wq = Linear::make(ps, prefix + ".q", d_model, d_model, rng);
    m.wk = Linear::make(ps, prefix + ".k", d_model, d_model, rng);
    m.wv = Linear::make(ps, prefix + ".v", d_model, d_model, rng);
    m.wo = Linear::make(ps, prefix + ".o", d_model, d_model, rng);
    return m;
  }

  // query (nq, d), key/value (nk, d). Returns (nq, d).
  Var operator()(Tape& t, Var query, Var key, Var value) const {
    int dh = d_model / n_heads;
    Var Q = wq(t, query), K = wk(t, key), V = wv(t, value);
    std::vector<Var> heads;
    heads.reserve(n_heads);
    float inv_sqrt = 1.f / std::sqrt(static_cast<float>(dh));
    for (int h = 0; h < n_heads; ++h) {
      Var Qh = t.slice_cols(Q, h * dh, (h + 1) * dh);
      Var Kh = t.slice_cols(K, h * dh, (h + 1) * dh);
      Var Vh = t.slice_cols(V, h * dh, (h + 1) * dh);
      Var scores = t.scale(t.matmul(Qh, t.transpose(Kh)), inv_sqrt);
      heads.push_back(t.matmul(t.softmax_rows(scores), Vh));
    }
    return wo(t, t.concat_cols(heads));
  }
};

// Two-layer position-wise feed-forward with ReLU, hidden = 4 * d_model.
struct FeedForward {
  Linear l1, l2;

  static FeedForward make(ParamStore& ps, const std::string& prefix, int d_model, Rng& rng) {
    FeedForward f;
    f.l1 = Linear::make(ps, prefix + ".l1", d_model, 4 * d_model, rng);
    f.l2 = Linear::make(ps, prefix + ".l2", 4 * d_model, d_model, rng);
    return f;
  }
  Var operator()(Tape& t, Var x) const { return l2(t, t.relu(l1(t, x))); }
};

// Single LSTM cell; gate layout along the weight columns is [i, f, g, o].
struct LSTMCell {
  Parameter* w_ih = nullptr;  // (in, 4h)
  Parameter* w_hh = nullptr;  // (h, 4h)
  Parameter* b = nullptr;     // (1, 4h)
  int hidden = 0;

  static LSTMCell make(ParamStore& ps, const std::string& prefix, int in, int hidden, Rng& rng) {
    LSTMCell c;
    c.hidden = hidden;
    c.w_ih = &ps.add_xavier(prefix + ".w_ih", in, 4 * hidden, rng);
    c.w_hh = &ps.add_xavier(prefix + ".w_hh", hidden, 4 * hidden, rng);
    c.b = &ps.add(prefix + ".b", 1, 4 * hidden);
    return c;
  }

  struct State {
    Var h, c;
  };

  // x (rows, in), state tensors (rows, hidden).
  State step(Tape& t, Var x, State s) const {
    Var gates = t.add(t.add(t.matmul(x, t.param(*w_ih)), t.matmul(s.h, t.param(*w_hh))),
                      t.param(*b));
    Var i = t.sigmoid(t.slice_cols(gates, 0, hidden));
    Var f = t.sigmoid(t.slice_cols(gates, hidden, 2 * hidden));
    Var g = t.tanh_(t.slice_cols(gates, 2 * hidden, 3 * hidden));
    Var o = t.sigmoid(t.slice_cols(gates, 3 * hidden, 4 * hidden));
    Var c = t.add(t.mul(f, s.c), t.mul(i, g));
    Var h = t.mul(o, t.tanh_(c));
    return {h, c};
  }
};

// Bidirectional LSTM over a row sequence. Output row i is the forward hidden
// state at i concatenated with the backward hidden state at i; both passes
// start from zero states.
struct BiLSTM {
  LSTMCell fwd, bwd;
  int hidden = 0;  // per direction

  static BiLSTM make(ParamStore& ps, const std::string& prefix, int in, int hidden, Rng& rng) {
    BiLSTM b;
    b.hidden = hidden;
    b.fwd = LSTMCell::make(ps, prefix + ".f", in, hidden, rng);
    b.bwd = LSTMCell::make(ps, prefix + ".b", in, hidden, rng);
    return b;
  }

  // x (n, in) -> (n, 2 * hidden), n >= 1.
  Var operator()(Tape& t, Var x, int n) const {
    LSTMCell::State sf{t.input(Tensor(1, hidden)), t.input(Tensor(1, hidden))};
    LSTMCell::State sb{t.input(Tensor(1, hidden)), t.input(Tensor(1, hidden))};
    std::vector<Var> f(n), b(n);
    for (int i = 0; i < n; ++i) {
      sf = fwd.step(t, t.slice_rows(x, i, i + 1), sf);
      f[i] = sf.h;
    }
    for (int i = n - 1; i >= 0; --i) {
      sb = bwd.step(t, t.slice_rows(x, i, i + 1), sb);
      b[i] = sb.h;
    }
    std::vector<Var> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = t.concat_cols({f[i], b[i]});
    return t.concat_rows(rows);
  }
};

}  // namespace sgg::nn
