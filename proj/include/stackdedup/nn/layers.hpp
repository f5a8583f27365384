// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stackdedup/nn/graph.hpp"
#include "stackdedup/rng.hpp"

namespace stackdedup::nn {

// Fills `p` with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class Real>
void init_uniform_fan_in(Parameter<Real>& p, std::size_t fan_in, Rng& rng);

// Single-layer bidirectional LSTM. Gate order within the 4H blocks is
// input, forget, cell, output.
template <class Real>
class BiLstm {
 public:
  struct Direction {
    Parameter<Real> w_ih;  // [4H, D]
    Parameter<Real> w_hh;  // [4H, H]
    Parameter<Real> bias;  // [4H]
  };

  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t input_dim,
         std::size_t hidden_dim);

  // Weights uniform in +-1/sqrt(fan_in); forget-gate bias 1, others 0.
  void init(Rng& rng);

  // inputs [T, D] -> per-step outputs [T, 2H]; row t is [fwd h_t | bwd h_t].
  Var<Real> forward(Var<Real> inputs);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t output_dim() const { return 2 * hidden_dim_; }

  ParameterList<Real> parameters();
  Direction& forward_direction() { return fwd_; }
  Direction& backward_direction() { return bwd_; }

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  Direction fwd_;
  Direction bwd_;
};

// Fully connected stack with rectifier hidden activations and a linear output.
template <class Real>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::vector<std::size_t> sizes);

  void init(Rng& rng);
  Var<Real> forward(Var<Real> x);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  ParameterList<Real> parameters();

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Parameter<Real>> weights_;
  std::vector<Parameter<Real>> biases_;
};

}  // namespace stackdedup::nn
