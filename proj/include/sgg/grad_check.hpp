#pragma once

#include <functional>
#include <vector>

#include "sgg/nn.hpp"

namespace sgg::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int checked = 0;
  std::string worst;  // "param[index]" of the worst component
};

// Compares reverse-mode gradients against central finite differences.
//
// loss_fn must rebuild the computation from current parameter values on the
// tape it is given and return a scalar Var. Components are checked per
// parameter; max_per_param < 0 checks all of them, otherwise a deterministic
// stratified subset of that size. Relative error uses |ad - fd| /
// max(1, |ad| + |fd|), so tiny gradients are compared absolutely.
GradCheckReport grad_check(const std::function<Var(Tape&)>& loss_fn,
                           const std::vector<Parameter*>& params, double step = 1e-3,
                           int max_per_param = -1);

}  // namespace sgg::nn
