// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Dynamically recorded computation graph for reverse-mode gradients.
//
// Operations append nodes in execution order, so the node list is already a
// topological order and `backward` simply walks it in reverse. Ops that read
// a Parameter write the parameter gradient directly; gradients therefore
// accumulate across graphs until the caller zeroes them.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>

#include "stackdedup/nn/tensor.hpp"

namespace stackdedup::nn {

template <class Real>
class Graph;

template <class Real>
class Var {
 public:
  Var() = default;
  Var(Graph<Real>* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph<Real>& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor<Real>& value() const { return graph_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  Graph<Real>* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

template <class Real>
class Graph {
 public:
  // Receives the node's output gradient; adds into input gradients.
  using BackwardFn = std::function<void(Graph&, const Tensor<Real>&)>;

  // With record = false no backward closures are kept (inference).
  explicit Graph(bool record = true);

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var<Real> push(Tensor<Real> value, BackwardFn backward = {});

  const Tensor<Real>& value(Var<Real> v) const { return node(v).value; }
  // Gradient buffer of a node, allocated (zero) on first access.
  Tensor<Real>& grad(Var<Real> v);
  bool has_grad(Var<Real> v) const { return !node(v).grad.empty(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable parameter.
  void backward(Var<Real> loss);

  // Throw on non-finite values produced by any op. Defaults to on in debug
  // builds.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    BackwardFn backward;
  };

  Node& node(Var<Real> v);
  const Node& node(Var<Real> v) const;

  std::deque<Node> nodes_;
  bool record_;
  bool check_finite_;
};

}  // namespace stackdedup::nn
