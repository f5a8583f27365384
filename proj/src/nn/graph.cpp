// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/nn/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace stackdedup::nn {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <class Real>
Graph<Real>::Graph(bool record)
    : record_(record),
#ifdef NDEBUG
      check_finite_(false)
#else
      check_finite_(true)
#endif
{
}

template <class Real>
typename Graph<Real>::Node& Graph<Real>::node(Var<Real> v) {
  if (&v.graph() != this || v.id() >= nodes_.size())
    throw std::invalid_argument("variable does not belong to this graph");
  return nodes_[v.id()];
}

template <class Real>
const typename Graph<Real>::Node& Graph<Real>::node(Var<Real> v) const {
  if (&v.graph() != this || v.id() >= nodes_.size())
    throw std::invalid_argument("variable does not belong to this graph");
  return nodes_[v.id()];
}

template <class Real>
Var<Real> Graph<Real>::push(Tensor<Real> value, BackwardFn backward) {
  if (check_finite_) {
    for (Real x : value.data())
      if (!std::isfinite(x))
        throw std::domain_error("non-finite value produced by node " +
                                std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  if (record_) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<Real>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <class Real>
Tensor<Real>& Graph<Real>::grad(Var<Real> v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor<Real>(n.value.shape());
  return n.grad;
}

template <class Real>
void Graph<Real>::backward(Var<Real> loss) {
  if (!record_) throw std::logic_error("backward on a non-recording graph");
  if (loss.size() != 1)
    throw ShapeError("backward expects a scalar loss, got " +
                     shape_string(loss.shape()));
  grad(loss)[0] += Real{1};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  // Node gradients are per pass; parameters keep the accumulated result.
  for (Node& n : nodes_) n.grad = Tensor<Real>();
}

template class Graph<float>;
template class Graph<double>;

}  // namespace stackdedup::nn
