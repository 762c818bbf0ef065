#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sgg/tensor.hpp"

namespace sgg::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value, zero-filled

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
};

// Handle into a Tape. Only valid for the tape that produced it, until the
// next clear().
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode autodiff over 2D float tensors. Operations
// record their backward pass as they execute; backward() replays them in
// reverse and accumulates into Parameter::grad for every bound parameter.
class Tape {
 public:
  Var input(Tensor t);
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[v.id].val; }
  const Tensor& grad_of(Var v) const { return nodes_[v.id].grad; }

  Var matmul(Var a, Var b);
  // b may be (1, c) and is then broadcast across rows of a.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, float s);
  Var add_scalar(Var a, float s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var log_(Var a);
  Var abs_(Var a);
  Var maximum(Var a, Var b);
  Var minimum(Var a, Var b);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  // gain and bias are (1, c); normalization is per row over all columns.
  Var layernorm_rows(Var a, Var gain, Var bias);
  Var transpose(Var a);
  Var concat_rows(const std::vector<Var>& vs);
  Var concat_cols(const std::vector<Var>& vs);
  Var slice_rows(Var a, int r0, int r1);
  Var slice_cols(Var a, int c0, int c1);
  // Output row i is input row idx[i]; indices may repeat.
  Var gather_rows(Var a, std::vector<int> idx);
  // Output (k, 1) with entry t equal to a[coords[t].first, coords[t].second].
  Var pick(Var a, std::vector<std::pair<int, int>> coords);
  Var sum_all(Var a);  // (1,1), accumulated in double

  Var mean_all(Var a) { return scale(sum_all(a), 1.f / static_cast<float>(val(a).numel())); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node, then
  // adds leaf gradients into their bound parameters. loss must be (1,1).
  // One backward per tape generation; clear() before reuse.
  void backward(Var loss);

  void clear();
  size_t size() const { return nodes_.size(); }

  static constexpr float kLayerNormEps = 1e-5f;

 private:
  struct Node {
    Tensor val;
    Tensor grad;  // empty until touched during backward
    std::function<void()> back;
    Parameter* bound = nullptr;
  };

  int push(Tensor val) {
    nodes_.push_back(Node{std::move(val), Tensor{}, nullptr, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }
  Tensor& ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.val.rows, n.val.cols);
    return n.grad;
  }
  Tensor& gval(int id) { return nodes_[id].grad; }
  const Tensor& v(int id) const { return nodes_[id].val; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace sgg::nn
