// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/nn/layers.hpp"

#include <cmath>
#include <memory>

#include "stackdedup/kernels.hpp"
#include "stackdedup/nn/ops.hpp"

namespace stackdedup::nn {

template <class Real>
void init_uniform_fan_in(Parameter<Real>& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Real& v : p.value.data())
    v = static_cast<Real>(rng.uniform(-bound, bound));
}

namespace {

template <class Real>
Real sigmoid(Real x) {
  if (x >= 0) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

// Activations of one direction over a whole sequence, indexed by time step.
template <class Real>
struct LstmTrace {
  std::vector<Real> gates;   // [T, 4H] post-activation i, f, g, o
  std::vector<Real> cell;    // [T, H]
  std::vector<Real> tanh_c;  // [T, H]
  std::vector<Real> h_prev;  // [T, H] recurrent input at each step
  std::vector<Real> c_prev;  // [T, H]
};

// Runs one direction and writes h_t into columns [col, col + H) of `out`.
template <class Real>
LstmTrace<Real> run_direction(const typename BiLstm<Real>::Direction& dir,
                              const Tensor<Real>& x, std::size_t hidden,
                              bool reverse, Tensor<Real>& out,
                              std::size_t col) {
  const std::size_t steps = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t g4 = 4 * hidden;
  const std::size_t out_width = out.dim(1);

  LstmTrace<Real> tr;
  tr.gates.resize(steps * g4);
  tr.cell.resize(steps * hidden);
  tr.tanh_c.resize(steps * hidden);
  tr.h_prev.assign(steps * hidden, Real{0});
  tr.c_prev.assign(steps * hidden, Real{0});

  // Input projections for all steps at once.
  kernels::matmul_nt(steps, g4, in, x.raw(), dir.w_ih.value.raw(),
                     tr.gates.data(), false);
  const Real* bias = dir.bias.value.raw();
  for (std::size_t t = 0; t < steps; ++t)
    kernels::axpy(g4, Real{1}, bias, tr.gates.data() + t * g4);

  std::vector<Real> h(hidden, Real{0});
  std::vector<Real> c(hidden, Real{0});
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    Real* z = tr.gates.data() + t * g4;
    std::copy(h.begin(), h.end(), tr.h_prev.begin() + t * hidden);
    std::copy(c.begin(), c.end(), tr.c_prev.begin() + t * hidden);
    kernels::gemv(g4, hidden, dir.w_hh.value.raw(), h.data(), z, true);
    Real* zi = z;
    Real* zf = z + hidden;
    Real* zg = z + 2 * hidden;
    Real* zo = z + 3 * hidden;
    Real* ct = tr.cell.data() + t * hidden;
    Real* tc = tr.tanh_c.data() + t * hidden;
    Real* orow = out.raw() + t * out_width + col;
    for (std::size_t k = 0; k < hidden; ++k) {
      zi[k] = sigmoid(zi[k]);
      zf[k] = sigmoid(zf[k]);
      zg[k] = std::tanh(zg[k]);
      zo[k] = sigmoid(zo[k]);
      ct[k] = zf[k] * c[k] + zi[k] * zg[k];
      tc[k] = std::tanh(ct[k]);
      h[k] = zo[k] * tc[k];
      c[k] = ct[k];
      orow[k] = h[k];
    }
  }
  return tr;
}

// Backpropagation through time for one direction. `dout` holds gradients of
// the full [T, 2H] output; this direction reads columns [col, col + H).
template <class Real>
void backprop_direction(typename BiLstm<Real>::Direction& dir,
                        const LstmTrace<Real>& tr, const Tensor<Real>& x,
                        std::size_t hidden, bool reverse,
                        const Tensor<Real>& dout, std::size_t col,
                        Tensor<Real>* dx) {
  const std::size_t steps = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t g4 = 4 * hidden;
  const std::size_t out_width = dout.dim(1);

  std::vector<Real> dz(steps * g4);
  std::vector<Real> dh_next(hidden, Real{0});
  std::vector<Real> dc_next(hidden, Real{0});
  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const Real* gates = tr.gates.data() + t * g4;
    const Real* gi = gates;
    const Real* gf = gates + hidden;
    const Real* gg = gates + 2 * hidden;
    const Real* go = gates + 3 * hidden;
    const Real* tc = tr.tanh_c.data() + t * hidden;
    const Real* cp = tr.c_prev.data() + t * hidden;
    const Real* dh_out = dout.raw() + t * out_width + col;
    Real* d = dz.data() + t * g4;
    for (std::size_t k = 0; k < hidden; ++k) {
      const Real dh = dh_out[k] + dh_next[k];
      const Real dc = dc_next[k] + dh * go[k] * (Real{1} - tc[k] * tc[k]);
      d[k] = dc * gg[k] * gi[k] * (Real{1} - gi[k]);
      d[hidden + k] = dc * cp[k] * gf[k] * (Real{1} - gf[k]);
      d[2 * hidden + k] = dc * gi[k] * (Real{1} - gg[k] * gg[k]);
      d[3 * hidden + k] = dh * tc[k] * go[k] * (Real{1} - go[k]);
      dc_next[k] = dc * gf[k];
    }
    kernels::gemv_t(g4, hidden, dir.w_hh.value.raw(), d, dh_next.data(),
                    false);
  }
  kernels::matmul_tn(g4, hidden, steps, dz.data(), tr.h_prev.data(),
                     dir.w_hh.grad.raw(), true);
  kernels::matmul_tn(g4, in, steps, dz.data(), x.raw(), dir.w_ih.grad.raw(),
                     true);
  for (std::size_t t = 0; t < steps; ++t)
    kernels::axpy(g4, Real{1}, dz.data() + t * g4, dir.bias.grad.raw());
  if (dx)
    kernels::matmul_nn(steps, in, g4, dz.data(), dir.w_ih.value.raw(),
                       dx->raw(), true);
}

}  // namespace

template <class Real>
BiLstm<Real>::BiLstm(const std::string& name, std::size_t input_dim,
                     std::size_t hidden_dim)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  auto make = [&](const std::string& tag) {
    Direction d;
    d.w_ih = Parameter<Real>(name + "." + tag + ".w_ih",
                             {4 * hidden_dim, input_dim});
    d.w_hh = Parameter<Real>(name + "." + tag + ".w_hh",
                             {4 * hidden_dim, hidden_dim});
    d.bias = Parameter<Real>(name + "." + tag + ".bias", {4 * hidden_dim});
    return d;
  };
  fwd_ = make("fwd");
  bwd_ = make("bwd");
}

template <class Real>
void BiLstm<Real>::init(Rng& rng) {
  for (Direction* d : {&fwd_, &bwd_}) {
    init_uniform_fan_in(d->w_ih, input_dim_, rng);
    init_uniform_fan_in(d->w_hh, hidden_dim_, rng);
    d->bias.value.fill(Real{0});
    for (std::size_t k = 0; k < hidden_dim_; ++k)
      d->bias.value[hidden_dim_ + k] = Real{1};
  }
}

template <class Real>
Var<Real> BiLstm<Real>::forward(Var<Real> inputs) {
  const auto& x = inputs.value();
  if (x.rank() != 2 || x.dim(1) != input_dim_)
    throw ShapeError("bilstm: expected [T, " + std::to_string(input_dim_) +
                     "], got " + shape_string(x.shape()));
  if (x.dim(0) == 0) throw ShapeError("bilstm: empty input sequence");

  const std::size_t h = hidden_dim_;
  Tensor<Real> out({x.dim(0), 2 * h});
  auto fwd_trace = std::make_shared<LstmTrace<Real>>(
      run_direction<Real>(fwd_, x, h, false, out, 0));
  auto bwd_trace = std::make_shared<LstmTrace<Real>>(
      run_direction<Real>(bwd_, x, h, true, out, h));

  Graph<Real>& graph = inputs.graph();
  if (!graph.recording()) return graph.push(std::move(out));
  return graph.push(std::move(out), [this, inputs, fwd_trace, bwd_trace, h](
                                        Graph<Real>& g,
                                        const Tensor<Real>& dout) {
    const auto& xv = inputs.value();
    Tensor<Real>* dx = &g.grad(inputs);
    backprop_direction<Real>(fwd_, *fwd_trace, xv, h, false, dout, 0, dx);
    backprop_direction<Real>(bwd_, *bwd_trace, xv, h, true, dout, h, dx);
  });
}

template <class Real>
ParameterList<Real> BiLstm<Real>::parameters() {
  return {&fwd_.w_ih, &fwd_.w_hh, &fwd_.bias,
          &bwd_.w_ih, &bwd_.w_hh, &bwd_.bias};
}

template <class Real>
Mlp<Real>::Mlp(const std::string& name, std::vector<std::size_t> sizes)
    : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2)
    throw ShapeError("mlp: need at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.emplace_back(name + ".w" + std::to_string(l),
                          Shape{sizes_[l + 1], sizes_[l]});
    biases_.emplace_back(name + ".b" + std::to_string(l),
                         Shape{sizes_[l + 1]});
  }
}

template <class Real>
void Mlp<Real>::init(Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    init_uniform_fan_in(weights_[l], sizes_[l], rng);
    biases_[l].value.fill(Real{0});
  }
}

template <class Real>
Var<Real> Mlp<Real>::forward(Var<Real> x) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = ops::linear(x, weights_[l], biases_[l]);
    if (l + 1 < weights_.size()) x = ops::relu(x);
  }
  return x;
}

template <class Real>
ParameterList<Real> Mlp<Real>::parameters() {
  ParameterList<Real> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

template void init_uniform_fan_in<float>(Parameter<float>&, std::size_t, Rng&);
template void init_uniform_fan_in<double>(Parameter<double>&, std::size_t,
                                          Rng&);
template class BiLstm<float>;
template class BiLstm<double>;
template class Mlp<float>;
template class Mlp<double>;

}  // namespace stackdedup::nn
