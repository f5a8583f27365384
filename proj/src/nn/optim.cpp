// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/nn/optim.hpp"

#include <cmath>

namespace stackdedup::nn {

template <class Real>
Adam<Real>::Adam(ParameterList<Real> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), Real{0});
    v_.emplace_back(p->value.size(), Real{0});
  }
}

template <class Real>
void Adam<Real>::step() {
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<Real>& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    Real* w = p.value.raw();
    Real* g = p.grad.raw();
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<Real>(b1 * m[k] + (1.0 - b1) * gk);
      v[k] = static_cast<Real>(b2 * v[k] + (1.0 - b2) * gk * gk);
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= static_cast<Real>(options_.lr * m_hat /
                                (std::sqrt(v_hat) + options_.eps));
      g[k] = Real{0};
    }
  }
}

template <class Real>
double clip_grad_norm(const ParameterList<Real>& params, double max_norm) {
  double sq = 0;
  for (const auto* p : params)
    for (Real g : p->grad.data()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const Real factor = static_cast<Real>(max_norm / norm);
    for (auto* p : params)
      for (Real& g : p->grad.data()) g *= factor;
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(const ParameterList<float>&, double);
template double clip_grad_norm<double>(const ParameterList<double>&, double);

}  // namespace stackdedup::nn
