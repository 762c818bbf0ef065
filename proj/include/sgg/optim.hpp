#pragma once

#include <cmath>
#include <vector>

#include "sgg/nn.hpp"

namespace sgg::nn {

// Step-decay learning-rate schedule: lr = initial * factor^(epoch / every).
struct LrSchedule {
  float initial = 1e-4f;
  float decay_factor = 0.5f;
  int decay_every = 5;  // epochs; <= 0 disables decay

  float at_epoch(int epoch) const {
    if (decay_every <= 0) return initial;
    return initial * std::pow(decay_factor, static_cast<float>(epoch / decay_every));
  }
};

// Adaptive-moment optimizer with bias correction. Moment buffers are
// allocated on the first step and keyed by parameter order, which must not
// change between steps.
class Adam {
 public:
  Adam(float lr = 1e-4f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }
  int64_t steps() const { return t_; }

  void step(const std::vector<Parameter*>& params);

 private:
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace sgg::nn
