#include "sgg/tape.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>

namespace sgg::nn {

// C (m,n) += A (m,k) * B (k,n)
static void mm_acc(const float* A, const float* B, float* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<size_t>(i) * k;
    float* c = C + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      float av = a[l];
      const float* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] = std::fma(av, b[j], c[j]);
    }
  }
}

// C (m,k) += A (m,n) * B^T, with B stored as (k,n)
static void mm_bt_acc(const float* A, const float* B, float* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const float* b = B + static_cast<size_t>(l) * n;
      float s = 0.f;
      for (int j = 0; j < n; ++j) s = std::fma(a[j], b[j], s);
      C[static_cast<size_t>(i) * k + l] += s;
    }
  }
}

// C (k,n) += A^T * B, with A stored as (m,k), B as (m,n)
static void mm_at_acc(const float* A, const float* B, float* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* b = B + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      float av = A[static_cast<size_t>(i) * k + l];
      float* c = C + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] = std::fma(av, b[j], c[j]);
    }
  }
}

Var Tape::input(Tensor t) { return Var{push(std::move(t))}; }

Var Tape::param(Parameter& p) {
  int id = push(p.value);
  nodes_[id].bound = &p;
  return Var{id};
}

Var Tape::matmul(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  assert(A.cols == B.rows);
  Tensor out(A.rows, B.cols);
  mm_acc(A.data.data(), B.data.data(), out.data.data(), A.rows, A.cols, B.cols);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id]() {
    const Tensor& g = gval(id);
    const Tensor &A = v(ai), &B = v(bi);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    mm_bt_acc(g.data.data(), B.data.data(), ga.data.data(), g.rows, g.cols, A.cols);
    mm_at_acc(A.data.data(), g.data.data(), gb.data.data(), A.rows, A.cols, g.cols);
  };
  return Var{id};
}

Var Tape::add(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  bool broadcast = (B.rows == 1 && A.rows > 1 && B.cols == A.cols);
  assert(broadcast || A.same_shape(B));
  Tensor out = A;
  if (broadcast) {
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(i, j) += B.at(0, j);
  } else {
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
  }
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id, broadcast]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    if (broadcast) {
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j);
    } else {
      for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
    }
  };
  return Var{id};
}

Var Tape::sub(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  assert(A.same_shape(B));
  Tensor out = A;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  };
  return Var{id};
}

Var Tape::mul(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  assert(A.same_shape(B));
  Tensor out = A;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id]() {
    const Tensor& g = gval(id);
    const Tensor &A = v(ai), &B = v(bi);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * B.data[i];
      gb.data[i] += g.data[i] * A.data[i];
    }
  };
  return Var{id};
}

Var Tape::div(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  assert(A.same_shape(B));
  Tensor out = A;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= B.data[i];
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id]() {
    const Tensor& g = gval(id);
    const Tensor &A = v(ai), &B = v(bi);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    for (size_t i = 0; i < g.data.size(); ++i) {
      float inv = 1.f / B.data[i];
      ga.data[i] += g.data[i] * inv;
      gb.data[i] -= g.data[i] * A.data[i] * inv * inv;
    }
  };
  return Var{id};
}

Var Tape::scale(Var a, float s) {
  Tensor out = v(a.id);
  for (float& x : out.data) x *= s;
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, s]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  };
  return Var{id};
}

Var Tape::add_scalar(Var a, float s) {
  Tensor out = v(a.id);
  for (float& x : out.data) x += s;
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  };
  return Var{id};
}

Var Tape::relu(Var a) {
  Tensor out = v(a.id);
  for (float& x : out.data) x = x > 0.f ? x : 0.f;
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& A = v(ai);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i)
      if (A.data[i] > 0.f) ga.data[i] += g.data[i];
  };
  return Var{id};
}

Var Tape::sigmoid(Var a) {
  Tensor out = v(a.id);
  for (float& x : out.data) x = 1.f / (1.f + std::exp(-x));
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& Y = v(id);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] += g.data[i] * Y.data[i] * (1.f - Y.data[i]);
  };
  return Var{id};
}

Var Tape::tanh_(Var a) {
  Tensor out = v(a.id);
  for (float& x : out.data) x = std::tanh(x);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& Y = v(id);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] += g.data[i] * (1.f - Y.data[i] * Y.data[i]);
  };
  return Var{id};
}

Var Tape::log_(Var a) {
  Tensor out = v(a.id);
  for (float& x : out.data) x = std::log(x);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& A = v(ai);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / A.data[i];
  };
  return Var{id};
}

Var Tape::abs_(Var a) {
  Tensor out = v(a.id);
  for (float& x : out.data) x = std::fabs(x);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& A = v(ai);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) {
      float s = A.data[i] > 0.f ? 1.f : (A.data[i] < 0.f ? -1.f : 0.f);
      ga.data[i] += g.data[i] * s;
    }
  };
  return Var{id};
}

Var Tape::maximum(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  assert(A.same_shape(B));
  Tensor out = A;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = A.data[i] >= B.data[i] ? A.data[i] : B.data[i];
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id]() {
    const Tensor& g = gval(id);
    const Tensor &A = v(ai), &B = v(bi);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    // Ties route to the first argument.
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (A.data[i] >= B.data[i])
        ga.data[i] += g.data[i];
      else
        gb.data[i] += g.data[i];
    }
  };
  return Var{id};
}

Var Tape::minimum(Var a, Var b) {
  const Tensor &A = v(a.id), &B = v(b.id);
  assert(A.same_shape(B));
  Tensor out = A;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = A.data[i] <= B.data[i] ? A.data[i] : B.data[i];
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, bi = b.id]() {
    const Tensor& g = gval(id);
    const Tensor &A = v(ai), &B = v(bi);
    Tensor& ga = ensure_grad(ai);
    Tensor& gb = ensure_grad(bi);
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (A.data[i] <= B.data[i])
        ga.data[i] += g.data[i];
      else
        gb.data[i] += g.data[i];
    }
  };
  return Var{id};
}

Var Tape::softmax_rows(Var a) {
  Tensor out = v(a.id);
  for (int i = 0; i < out.rows; ++i) {
    float mx = out.at(i, 0);
    for (int j = 1; j < out.cols; ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < out.cols; ++j) {
      float e = std::exp(out.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < out.cols; ++j) out.at(i, j) *= inv;
  }
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& Y = v(id);
    Tensor& ga = ensure_grad(ai);
    for (int i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < g.cols; ++j) dot += static_cast<double>(g.at(i, j)) * Y.at(i, j);
      for (int j = 0; j < g.cols; ++j)
        ga.at(i, j) += Y.at(i, j) * (g.at(i, j) - static_cast<float>(dot));
    }
  };
  return Var{id};
}

Var Tape::log_softmax_rows(Var a) {
  const Tensor& A = v(a.id);
  Tensor out = A;
  for (int i = 0; i < out.rows; ++i) {
    float mx = out.at(i, 0);
    for (int j = 1; j < out.cols; ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < out.cols; ++j) sum += std::exp(static_cast<double>(out.at(i, j)) - mx);
    float lse = mx + static_cast<float>(std::log(sum));
    for (int j = 0; j < out.cols; ++j) out.at(i, j) -= lse;
  }
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    const Tensor& Y = v(id);  // log-probabilities
    Tensor& ga = ensure_grad(ai);
    for (int i = 0; i < g.rows; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < g.cols; ++j) gsum += g.at(i, j);
      for (int j = 0; j < g.cols; ++j)
        ga.at(i, j) += g.at(i, j) - static_cast<float>(gsum) * std::exp(Y.at(i, j));
    }
  };
  return Var{id};
}

Var Tape::layernorm_rows(Var a, Var gain, Var bias) {
  const Tensor& A = v(a.id);
  const Tensor& G = v(gain.id);
  const Tensor& B = v(bias.id);
  assert(G.rows == 1 && G.cols == A.cols && B.rows == 1 && B.cols == A.cols);
  int R = A.rows, C = A.cols;
  Tensor xhat(R, C);
  Tensor inv_sigma(R, 1);
  Tensor out(R, C);
  for (int i = 0; i < R; ++i) {
    double mean = 0.0;
    for (int j = 0; j < C; ++j) mean += A.at(i, j);
    mean /= C;
    double var = 0.0;
    for (int j = 0; j < C; ++j) {
      double d = A.at(i, j) - mean;
      var += d * d;
    }
    var /= C;
    float is = static_cast<float>(1.0 / std::sqrt(var + kLayerNormEps));
    inv_sigma.at(i, 0) = is;
    for (int j = 0; j < C; ++j) {
      float xh = (A.at(i, j) - static_cast<float>(mean)) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = xh * G.at(0, j) + B.at(0, j);
    }
  }
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, gi = gain.id, bi = bias.id, xhat = std::move(xhat),
                     inv_sigma = std::move(inv_sigma)]() {
    const Tensor& g = gval(id);
    const Tensor& G = v(gi);
    Tensor& ga = ensure_grad(ai);
    Tensor& gg = ensure_grad(gi);
    Tensor& gb = ensure_grad(bi);
    int R = g.rows, C = g.cols;
    for (int i = 0; i < R; ++i) {
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int j = 0; j < C; ++j) {
        float dxhat = g.at(i, j) * G.at(0, j);
        mean_dxhat += dxhat;
        mean_dxhat_xhat += static_cast<double>(dxhat) * xhat.at(i, j);
        gg.at(0, j) += g.at(i, j) * xhat.at(i, j);
        gb.at(0, j) += g.at(i, j);
      }
      mean_dxhat /= C;
      mean_dxhat_xhat /= C;
      float is = inv_sigma.at(i, 0);
      for (int j = 0; j < C; ++j) {
        float dxhat = g.at(i, j) * G.at(0, j);
        ga.at(i, j) += is * (dxhat - static_cast<float>(mean_dxhat) -
                             xhat.at(i, j) * static_cast<float>(mean_dxhat_xhat));
      }
    }
  };
  return Var{id};
}

Var Tape::transpose(Var a) {
  const Tensor& A = v(a.id);
  Tensor out(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
  };
  return Var{id};
}

Var Tape::concat_rows(const std::vector<Var>& vs) {
  assert(!vs.empty());
  int cols = v(vs[0].id).cols;
  int rows = 0;
  for (Var x : vs) {
    assert(v(x.id).cols == cols);
    rows += v(x.id).rows;
  }
  Tensor out(rows, cols);
  int r = 0;
  for (Var x : vs) {
    const Tensor& A = v(x.id);
    std::copy(A.data.begin(), A.data.end(), out.data.begin() + static_cast<size_t>(r) * cols);
    r += A.rows;
  }
  std::vector<int> ids;
  for (Var x : vs) ids.push_back(x.id);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ids = std::move(ids)]() {
    const Tensor& g = gval(id);
    int r = 0;
    for (int src : ids) {
      Tensor& ga = ensure_grad(src);
      size_t n = ga.data.size();
      const float* gp = g.data.data() + static_cast<size_t>(r) * g.cols;
      for (size_t i = 0; i < n; ++i) ga.data[i] += gp[i];
      r += ga.rows;
    }
  };
  return Var{id};
}

Var Tape::concat_cols(const std::vector<Var>& vs) {
  assert(!vs.empty());
  int rows = v(vs[0].id).rows;
  int cols = 0;
  for (Var x : vs) {
    assert(v(x.id).rows == rows);
    cols += v(x.id).cols;
  }
  Tensor out(rows, cols);
  int c = 0;
  for (Var x : vs) {
    const Tensor& A = v(x.id);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.at(i, c + j) = A.at(i, j);
    c += A.cols;
  }
  std::vector<int> ids;
  for (Var x : vs) ids.push_back(x.id);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ids = std::move(ids)]() {
    const Tensor& g = gval(id);
    int c = 0;
    for (int src : ids) {
      Tensor& ga = ensure_grad(src);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(i, c + j);
      c += ga.cols;
    }
  };
  return Var{id};
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Tensor& A = v(a.id);
  assert(0 <= r0 && r0 < r1 && r1 <= A.rows);
  Tensor out(r1 - r0, A.cols);
  std::copy(A.data.begin() + static_cast<size_t>(r0) * A.cols,
            A.data.begin() + static_cast<size_t>(r1) * A.cols, out.data.begin());
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, r0]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    float* base = ga.data.data() + static_cast<size_t>(r0) * ga.cols;
    for (size_t i = 0; i < g.data.size(); ++i) base[i] += g.data[i];
  };
  return Var{id};
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Tensor& A = v(a.id);
  assert(0 <= c0 && c0 < c1 && c1 <= A.cols);
  Tensor out(A.rows, c1 - c0);
  for (int i = 0; i < A.rows; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = A.at(i, j);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, c0]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) ga.at(i, c0 + j) += g.at(i, j);
  };
  return Var{id};
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Tensor& A = v(a.id);
  Tensor out(static_cast<int>(idx.size()), A.cols);
  for (size_t i = 0; i < idx.size(); ++i) {
    assert(idx[i] >= 0 && idx[i] < A.rows);
    std::copy(A.data.begin() + static_cast<size_t>(idx[i]) * A.cols,
              A.data.begin() + static_cast<size_t>(idx[i] + 1) * A.cols,
              out.data.begin() + i * A.cols);
  }
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, idx = std::move(idx)]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < g.cols; ++j) ga.at(idx[i], j) += g.at(static_cast<int>(i), j);
  };
  return Var{id};
}

Var Tape::pick(Var a, std::vector<std::pair<int, int>> coords) {
  const Tensor& A = v(a.id);
  Tensor out(static_cast<int>(coords.size()), 1);
  for (size_t i = 0; i < coords.size(); ++i) out.at(static_cast<int>(i), 0) =
      A.at(coords[i].first, coords[i].second);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id, coords = std::move(coords)]() {
    const Tensor& g = gval(id);
    Tensor& ga = ensure_grad(ai);
    for (size_t i = 0; i < coords.size(); ++i)
      ga.at(coords[i].first, coords[i].second) += g.at(static_cast<int>(i), 0);
  };
  return Var{id};
}

Var Tape::sum_all(Var a) {
  const Tensor& A = v(a.id);
  double s = 0.0;
  for (float x : A.data) s += x;
  Tensor out(1, 1);
  out.at(0, 0) = static_cast<float>(s);
  int id = push(std::move(out));
  nodes_[id].back = [this, id, ai = a.id]() {
    float g = gval(id).at(0, 0);
    Tensor& ga = ensure_grad(ai);
    for (float& x : ga.data) x += g;
  };
  return Var{id};
}

void Tape::backward(Var loss) {
  assert(!backward_done_ && "tape already differentiated; clear() first");
  backward_done_ = true;
  const Tensor& L = v(loss.id);
  assert(L.rows == 1 && L.cols == 1);
  (void)L;
  ensure_grad(loss.id).at(0, 0) = 1.f;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.grad.empty() && n.back) n.back();
  }
  for (Node& n : nodes_) {
    if (n.bound && !n.grad.empty()) {
      Tensor& pg = n.bound->grad;
      for (size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += n.grad.data[i];
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace sgg::nn
