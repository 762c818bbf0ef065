#include "sgg/optim.hpp"

#include <stdexcept>

namespace sgg::nn {

void Adam::step(const std::vector<Parameter*>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->value.data.size(), 0.f);
      v_[i].assign(params[i]->value.data.size(), 0.f);
    }
  }
  if (m_.size() != params.size()) throw std::runtime_error("Adam: parameter set changed");
  ++t_;
  float bc1 = 1.f - std::pow(beta1_, static_cast<float>(t_));
  float bc2 = 1.f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.value.data.size() != m_[i].size()) throw std::runtime_error("Adam: shape changed");
    for (size_t j = 0; j < p.value.data.size(); ++j) {
      float g = p.grad.data[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.f - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.f - beta2_) * g * g;
      float mhat = m_[i][j] / bc1;
      float vhat = v_[i][j] / bc2;
      p.value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace sgg::nn
