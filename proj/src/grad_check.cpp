#include "sgg/grad_check.hpp"

#include <cmath>
#include <sstream>

namespace sgg::nn {

GradCheckReport grad_check(const std::function<Var(Tape&)>& loss_fn,
                           const std::vector<Parameter*>& params, double step,
                           int max_per_param) {
  for (Parameter* p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.f);
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }

  auto eval = [&]() -> double {
    Tape tape;
    Var loss = loss_fn(tape);
    return tape.val(loss).at(0, 0);
  };

  GradCheckReport rep;
  for (Parameter* p : params) {
    int64_t n = p->value.numel();
    // Stride sampling keeps the checked subset deterministic and spread
    // across the tensor.
    int64_t stride = 1;
    if (max_per_param > 0 && n > max_per_param) stride = n / max_per_param;
    for (int64_t i = 0; i < n; i += stride) {
      float saved = p->value.data[i];
      p->value.data[i] = saved + static_cast<float>(step);
      double up = eval();
      p->value.data[i] = saved - static_cast<float>(step);
      double down = eval();
      p->value.data[i] = saved;
      double fd = (up - down) / (2.0 * step);
      double ad = p->grad.data[i];
      double abs_err = std::fabs(ad - fd);
      double rel_err = abs_err / std::max(1.0, std::fabs(ad) + std::fabs(fd));
      ++rep.checked;
      if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
      if (rel_err > rep.max_rel_err) {
        rep.max_rel_err = rel_err;
        std::ostringstream ss;
        ss << p->name << "[" << i << "] ad=" << ad << " fd=" << fd;
        rep.worst = ss.str();
      }
    }
  }
  return rep;
}

}  // namespace sgg::nn
