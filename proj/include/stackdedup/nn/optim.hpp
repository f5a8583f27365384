// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "stackdedup/nn/tensor.hpp"

namespace stackdedup::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Moments are kept per
// parameter in the order given at construction.
template <class Real>
class Adam {
 public:
  Adam(ParameterList<Real> params, AdamOptions options = {});

  // Applies one update from the accumulated gradients, then zeroes them.
  void step();

  void set_lr(double lr) { options_.lr = lr; }
  long steps() const { return steps_; }

 private:
  ParameterList<Real> params_;
  AdamOptions options_;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
  long steps_ = 0;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
template <class Real>
double clip_grad_norm(const ParameterList<Real>& params, double max_norm);

}  // namespace stackdedup::nn
