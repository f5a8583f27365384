// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Graph operations. Each op validates operand shapes, computes its value, and
// (when the graph is recording) registers the matching backward closure.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stackdedup/nn/graph.hpp"

namespace stackdedup::nn::ops {

// Leaf without gradient routing.
template <class Real>
Var<Real> constant(Graph<Real>& g, Tensor<Real> value);

// Leaf whose gradient is added to `p.grad`.
template <class Real>
Var<Real> param(Graph<Real>& g, Parameter<Real>& p);

// Rows of `table` [V,D] selected by `ids` -> [T,D].
template <class Real>
Var<Real> embedding(Graph<Real>& g, Parameter<Real>& table,
                    std::span<const std::int32_t> ids);

// x[C] -> W x + b with W [O,C], b [O].
template <class Real>
Var<Real> linear(Var<Real> x, Parameter<Real>& w, Parameter<Real>& b);

template <class Real>
Var<Real> relu(Var<Real> x);

// Column-wise reductions over the rows of a matrix [T,C] -> [C].
template <class Real>
Var<Real> mean_rows(Var<Real> x);
template <class Real>
Var<Real> max_rows(Var<Real> x);

// Concatenation of the forward-direction state at the last step and the
// backward-direction state at the first step of biLSTM outputs [T,2H] -> [2H].
template <class Real>
Var<Real> final_hidden(Var<Real> outputs);

// 1-D operands joined end to end.
template <class Real>
Var<Real> concat(std::span<const Var<Real>> parts);

// 1-D operands of equal width stacked as rows -> [T,C].
template <class Real>
Var<Real> stack(std::span<const Var<Real>> rows);

// x [T,C] with `v` [C] added to every row whose mask entry is set.
template <class Real>
Var<Real> add_to_rows(Var<Real> x, Var<Real> v,
                      const std::vector<bool>& mask);

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b);

template <class Real>
Var<Real> scale(Var<Real> x, Real factor);

// Sum of all elements -> scalar.
template <class Real>
Var<Real> sum(Var<Real> x);

// Mean of scalar operands -> scalar.
template <class Real>
Var<Real> mean(std::span<const Var<Real>> scalars);

// Pairwise cosine similarities of the rows of a [N,C] and b [M,C] -> [N,M].
// Throws std::domain_error on a zero row.
template <class Real>
Var<Real> cosine_matrix(Var<Real> a, Var<Real> b);

// Contrastive loss over a square similarity matrix whose diagonal holds the
// positive pairs, averaged over rows. The standard form keeps the positive in
// the denominator; `literal_denominator` sums only the off-diagonal terms.
template <class Real>
Var<Real> info_nce(Var<Real> similarities, Real temperature,
                   bool literal_denominator = false);

// log(1 + exp(-s_p)) + log(1 + exp(s_n)) for scalar scores.
template <class Real>
Var<Real> bce_triplet(Var<Real> positive_score, Var<Real> negative_score);

}  // namespace stackdedup::nn::ops
