#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sgg/grad_check.hpp"
#include "sgg/nn.hpp"

using namespace sgg;
using namespace sgg::nn;

static Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (float& x : t.data) x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

TEST_CASE("linear with identity weights is identity") {
  ParamStore ps;
  Rng rng(1);
  Linear lin = Linear::make(ps, "lin", 3, 3, rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) lin.W->value.at(i, j) = (i == j) ? 1.f : 0.f;
  std::fill(lin.b->value.data.begin(), lin.b->value.data.end(), 0.f);

  Tape t;
  Tensor x = random_tensor(4, 3, rng);
  const Tensor& y = t.val(lin(t, t.input(x)));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("linear of zero input broadcasts the bias") {
  ParamStore ps;
  Rng rng(2);
  Linear lin = Linear::make(ps, "lin", 3, 2, rng);
  lin.b->value = Tensor::from(1, 2, {0.7f, -0.3f});
  Tape t;
  const Tensor& y = t.val(lin(t, t.input(Tensor::zeros(5, 3))));
  for (int i = 0; i < 5; ++i) {
    CHECK(y.at(i, 0) == doctest::Approx(0.7f));
    CHECK(y.at(i, 1) == doctest::Approx(-0.3f));
  }
}

TEST_CASE("attention with identical key rows is uniform") {
  ParamStore ps;
  Rng rng(3);
  MultiHeadAttention mha = MultiHeadAttention::make(ps, "mha", 8, 2, rng);
  Tensor q = random_tensor(3, 8, rng);
  Tensor kv(4, 8);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j) kv.at(i, j) = 0.3f * j;  // all rows identical

  // With identical keys, attention averages values uniformly, so the output
  // must not depend on the query direction.
  Tape t1;
  Var k1 = t1.input(kv);
  Tensor out1 = t1.val(mha(t1, t1.input(q), k1, k1));
  Tensor q2 = random_tensor(3, 8, rng);
  Tape t2;
  Var k2 = t2.input(kv);
  Tensor out2 = t2.val(mha(t2, t2.input(q2), k2, k2));
  for (int64_t i = 0; i < out1.numel(); ++i)
    CHECK(out1.data[i] == doctest::Approx(out2.data[i]).epsilon(1e-4));
}

TEST_CASE("attention with a single key returns the projected value") {
  ParamStore ps;
  Rng rng(4);
  MultiHeadAttention mha = MultiHeadAttention::make(ps, "mha", 8, 2, rng);
  Tensor v_row = random_tensor(1, 8, rng);
  Tensor q_a = random_tensor(2, 8, rng), q_b = random_tensor(2, 8, rng);
  Tape t1, t2;
  Tensor o1 = t1.val(mha(t1, t1.input(q_a), t1.input(v_row), t1.input(v_row)));
  Tensor o2 = t2.val(mha(t2, t2.input(q_b), t2.input(v_row), t2.input(v_row)));
  for (int64_t i = 0; i < o1.numel(); ++i)
    CHECK(o1.data[i] == doctest::Approx(o2.data[i]).epsilon(1e-4));
}

TEST_CASE("attention is invariant to joint key-value permutation") {
  ParamStore ps;
  Rng rng(5);
  MultiHeadAttention mha = MultiHeadAttention::make(ps, "mha", 8, 4, rng);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor q = random_tensor(2, 8, rng);
    Tensor k = random_tensor(5, 8, rng);
    Tensor v = random_tensor(5, 8, rng);
    std::vector<int> perm{0, 1, 2, 3, 4};
    rng.shuffle(perm);
    Tensor kp(5, 8), vp(5, 8);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 8; ++j) {
        kp.at(i, j) = k.at(perm[i], j);
        vp.at(i, j) = v.at(perm[i], j);
      }
    Tape t1, t2;
    Tensor o1 = t1.val(mha(t1, t1.input(q), t1.input(k), t1.input(v)));
    Tensor o2 = t2.val(mha(t2, t2.input(q), t2.input(kp), t2.input(vp)));
    for (int64_t i = 0; i < o1.numel(); ++i)
      CHECK(o1.data[i] == doctest::Approx(o2.data[i]).epsilon(1e-3));
  }
}

TEST_CASE("composed attention + ffn + layernorm block passes gradient check") {
  ParamStore ps;
  Rng rng(6);
  MultiHeadAttention mha = MultiHeadAttention::make(ps, "mha", 8, 2, rng);
  FeedForward ffn = FeedForward::make(ps, "ffn", 8, rng);
  LayerNorm ln = LayerNorm::make(ps, "ln", 8);
  Tensor x = random_tensor(4, 8, rng);

  auto rep = grad_check(
      [&](Tape& t) {
        Var in = t.input(x);
        Var attn = t.add(in, mha(t, in, in, in));
        Var out = ln(t, t.add(attn, ffn(t, attn)));
        return t.mean_all(t.mul(out, out));
      },
      ps.all());
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("lstm cell gradient and recurrence") {
  ParamStore ps;
  Rng rng(7);
  LSTMCell cell = LSTMCell::make(ps, "lstm", 6, 5, rng);
  Tensor x0 = random_tensor(2, 6, rng), x1 = random_tensor(2, 6, rng);

  auto rep = grad_check(
      [&](Tape& t) {
        LSTMCell::State s{t.input(Tensor::zeros(2, 5)), t.input(Tensor::zeros(2, 5))};
        s = cell.step(t, t.input(x0), s);
        s = cell.step(t, t.input(x1), s);
        return t.mean_all(t.mul(s.h, s.h));
      },
      ps.all());
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("parameter names must be unique") {
  ParamStore ps;
  ps.add("w", 2, 2);
  CHECK_THROWS_AS(ps.add("w", 1, 1), std::runtime_error);
}
