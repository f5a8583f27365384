// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "stackdedup/kernels.hpp"

namespace stackdedup::nn::ops {

namespace {

template <class Real>
void require_rank(Var<Real> x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     shape_string(x.shape()));
}

template <class Real>
void require_same_graph(Var<Real> a, Var<Real> b, const char* op) {
  if (&a.graph() != &b.graph())
    throw std::invalid_argument(std::string(op) +
                                ": operands from different graphs");
}

template <class Real>
void add_into(Tensor<Real>& dst, std::span<const Real> src) {
  Real* d = dst.raw();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += src[i];
}

// log(1 + exp(x)) without overflow.
template <class Real>
Real softplus(Real x) {
  return std::max(x, Real{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class Real>
Real sigmoid(Real x) {
  if (x >= 0) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

}  // namespace

template <class Real>
Var<Real> constant(Graph<Real>& g, Tensor<Real> value) {
  return g.push(std::move(value));
}

template <class Real>
Var<Real> param(Graph<Real>& g, Parameter<Real>& p) {
  Parameter<Real>* target = &p;
  return g.push(p.value, [target](Graph<Real>&, const Tensor<Real>& dout) {
    add_into(target->grad, dout.data());
  });
}

template <class Real>
Var<Real> embedding(Graph<Real>& g, Parameter<Real>& table,
                    std::span<const std::int32_t> ids) {
  if (table.value.rank() != 2)
    throw ShapeError("embedding: table must be rank 2");
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  const std::size_t vocab = table.value.dim(0);
  const std::size_t width = table.value.dim(1);
  Tensor<Real> out({ids.size(), width});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab)
      throw std::out_of_range("embedding: id " + std::to_string(ids[t]) +
                              " outside table of " + std::to_string(vocab));
    auto src = table.value.row(static_cast<std::size_t>(ids[t]));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  Parameter<Real>* target = &table;
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  return g.push(std::move(out), [target, kept = std::move(kept), width](
                                    Graph<Real>&, const Tensor<Real>& dout) {
    for (std::size_t t = 0; t < kept.size(); ++t)
      kernels::axpy(width, Real{1}, dout.raw() + t * width,
                    target->grad.raw() + kept[t] * width);
  });
}

template <class Real>
Var<Real> linear(Var<Real> x, Parameter<Real>& w, Parameter<Real>& b) {
  require_rank(x, 1, "linear");
  const std::size_t in = x.size();
  if (w.value.rank() != 2 || w.value.dim(1) != in ||
      b.value.size() != w.value.dim(0))
    throw ShapeError("linear: weight " + shape_string(w.value.shape()) +
                     " / bias " + shape_string(b.value.shape()) +
                     " incompatible with input " + shape_string(x.shape()));
  const std::size_t out_dim = w.value.dim(0);
  Tensor<Real> out = b.value;
  kernels::gemv(out_dim, in, w.value.raw(), x.value().raw(), out.raw(), true);
  Parameter<Real>* wp = &w;
  Parameter<Real>* bp = &b;
  return x.graph().push(
      std::move(out),
      [x, wp, bp, in, out_dim](Graph<Real>& g, const Tensor<Real>& dout) {
        kernels::ger(out_dim, in, dout.raw(), x.value().raw(),
                     wp->grad.raw());
        add_into(bp->grad, dout.data());
        kernels::gemv_t(out_dim, in, wp->value.raw(), dout.raw(),
                        g.grad(x).raw(), true);
      });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (Real& v : out.data()) v = std::max(v, Real{0});
  return x.graph().push(std::move(out),
                        [x](Graph<Real>& g, const Tensor<Real>& dout) {
                          Tensor<Real>& dx = g.grad(x);
                          const auto& in = x.value();
                          for (std::size_t i = 0; i < in.size(); ++i)
                            if (in[i] > 0) dx[i] += dout[i];
                        });
}

template <class Real>
Var<Real> mean_rows(Var<Real> x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.value().dim(0);
  const std::size_t cols = x.value().dim(1);
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  Tensor<Real> out({cols});
  for (std::size_t r = 0; r < rows; ++r)
    kernels::axpy(cols, Real{1}, x.value().raw() + r * cols, out.raw());
  const Real inv = Real{1} / static_cast<Real>(rows);
  for (Real& v : out.data()) v *= inv;
  return x.graph().push(
      std::move(out), [x, rows, cols, inv](Graph<Real>& g,
                                           const Tensor<Real>& dout) {
        Tensor<Real>& dx = g.grad(x);
        for (std::size_t r = 0; r < rows; ++r)
          kernels::axpy(cols, inv, dout.raw(), dx.raw() + r * cols);
      });
}

template <class Real>
Var<Real> max_rows(Var<Real> x) {
  require_rank(x, 2, "max_rows");
  const std::size_t rows = x.value().dim(0);
  const std::size_t cols = x.value().dim(1);
  if (rows == 0) throw ShapeError("max_rows: no rows");
  Tensor<Real> out({cols});
  std::vector<std::uint32_t> argmax(cols, 0);
  const auto& in = x.value();
  for (std::size_t c = 0; c < cols; ++c) out[c] = in[c];
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const Real v = in[r * cols + c];
      if (v > out[c]) {
        out[c] = v;
        argmax[c] = static_cast<std::uint32_t>(r);
      }
    }
  return x.graph().push(
      std::move(out), [x, cols, argmax = std::move(argmax)](
                          Graph<Real>& g, const Tensor<Real>& dout) {
        Tensor<Real>& dx = g.grad(x);
        for (std::size_t c = 0; c < cols; ++c)
          dx[argmax[c] * cols + c] += dout[c];
      });
}

template <class Real>
Var<Real> final_hidden(Var<Real> outputs) {
  require_rank(outputs, 2, "final_hidden");
  const std::size_t rows = outputs.value().dim(0);
  const std::size_t width = outputs.value().dim(1);
  if (rows == 0 || width % 2 != 0)
    throw ShapeError("final_hidden: expected [T, 2H], got " +
                     shape_string(outputs.shape()));
  const std::size_t h = width / 2;
  const auto& in = outputs.value();
  Tensor<Real> out({width});
  std::copy_n(in.raw() + (rows - 1) * width, h, out.raw());
  std::copy_n(in.raw() + h, h, out.raw() + h);
  return outputs.graph().push(
      std::move(out), [outputs, rows, width, h](Graph<Real>& g,
                                                const Tensor<Real>& dout) {
        Tensor<Real>& dx = g.grad(outputs);
        kernels::axpy(h, Real{1}, dout.raw(), dx.raw() + (rows - 1) * width);
        kernels::axpy(h, Real{1}, dout.raw() + h, dx.raw() + h);
      });
}

template <class Real>
Var<Real> concat(std::span<const Var<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<Var<Real>> kept(parts.begin(), parts.end());
  std::size_t total = 0;
  for (const auto& p : kept) {
    require_rank(p, 1, "concat");
    require_same_graph(p, kept.front(), "concat");
    total += p.size();
  }
  Tensor<Real> out({total});
  std::size_t offset = 0;
  for (const auto& p : kept) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.raw() + offset);
    offset += p.size();
  }
  Graph<Real>& graph = kept.front().graph();
  return graph.push(std::move(out), [kept](Graph<Real>& g,
                                           const Tensor<Real>& dout) {
    std::size_t off = 0;
    for (const auto& p : kept) {
      add_into(g.grad(p), dout.data().subspan(off, p.size()));
      off += p.size();
    }
  });
}

template <class Real>
Var<Real> stack(std::span<const Var<Real>> rows) {
  if (rows.empty()) throw ShapeError("stack: no operands");
  std::vector<Var<Real>> kept(rows.begin(), rows.end());
  const std::size_t width = kept.front().size();
  for (const auto& r : kept) {
    require_rank(r, 1, "stack");
    require_same_graph(r, kept.front(), "stack");
    if (r.size() != width)
      throw ShapeError("stack: row widths differ (" + std::to_string(width) +
                       " vs " + std::to_string(r.size()) + ")");
  }
  Tensor<Real> out({kept.size(), width});
  for (std::size_t i = 0; i < kept.size(); ++i)
    std::copy(kept[i].value().data().begin(), kept[i].value().data().end(),
              out.row(i).begin());
  Graph<Real>& graph = kept.front().graph();
  return graph.push(std::move(out), [kept, width](Graph<Real>& g,
                                                  const Tensor<Real>& dout) {
    for (std::size_t i = 0; i < kept.size(); ++i)
      add_into(g.grad(kept[i]), dout.data().subspan(i * width, width));
  });
}

template <class Real>
Var<Real> add_to_rows(Var<Real> x, Var<Real> v,
                      const std::vector<bool>& mask) {
  require_rank(x, 2, "add_to_rows");
  require_rank(v, 1, "add_to_rows");
  require_same_graph(x, v, "add_to_rows");
  const std::size_t rows = x.value().dim(0);
  const std::size_t cols = x.value().dim(1);
  if (v.size() != cols || mask.size() != rows)
    throw ShapeError("add_to_rows: vector " + shape_string(v.shape()) +
                     " / mask of " + std::to_string(mask.size()) +
                     " incompatible with " + shape_string(x.shape()));
  Tensor<Real> out = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    if (mask[r]) kernels::axpy(cols, Real{1}, v.value().raw(), out.raw() + r * cols);
  return x.graph().push(
      std::move(out), [x, v, mask, rows, cols](Graph<Real>& g,
                                               const Tensor<Real>& dout) {
        add_into(g.grad(x), dout.data());
        Tensor<Real>& dv = g.grad(v);
        for (std::size_t r = 0; r < rows; ++r)
          if (mask[r]) kernels::axpy(cols, Real{1}, dout.raw() + r * cols, dv.raw());
      });
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  require_same_graph(a, b, "add");
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  Tensor<Real> out = a.value();
  add_into(out, b.value().data());
  return a.graph().push(std::move(out),
                        [a, b](Graph<Real>& g, const Tensor<Real>& dout) {
                          add_into(g.grad(a), dout.data());
                          add_into(g.grad(b), dout.data());
                        });
}

template <class Real>
Var<Real> scale(Var<Real> x, Real factor) {
  Tensor<Real> out = x.value();
  for (Real& v : out.data()) v *= factor;
  return x.graph().push(std::move(out), [x, factor](Graph<Real>& g,
                                                    const Tensor<Real>& dout) {
    kernels::axpy(dout.size(), factor, dout.raw(), g.grad(x).raw());
  });
}

template <class Real>
Var<Real> sum(Var<Real> x) {
  Real total = 0;
  for (Real v : x.value().data()) total += v;
  return x.graph().push(Tensor<Real>::scalar(total),
                        [x](Graph<Real>& g, const Tensor<Real>& dout) {
                          Tensor<Real>& dx = g.grad(x);
                          for (Real& v : dx.data()) v += dout[0];
                        });
}

template <class Real>
Var<Real> mean(std::span<const Var<Real>> scalars) {
  if (scalars.empty()) throw ShapeError("mean: no operands");
  std::vector<Var<Real>> kept(scalars.begin(), scalars.end());
  Real total = 0;
  for (const auto& s : kept) {
    if (s.size() != 1) throw ShapeError("mean: operands must be scalars");
    require_same_graph(s, kept.front(), "mean");
    total += s.value()[0];
  }
  const Real inv = Real{1} / static_cast<Real>(kept.size());
  Graph<Real>& graph = kept.front().graph();
  return graph.push(Tensor<Real>::scalar(total * inv),
                    [kept, inv](Graph<Real>& g, const Tensor<Real>& dout) {
                      for (const auto& s : kept) g.grad(s)[0] += dout[0] * inv;
                    });
}

template <class Real>
Var<Real> cosine_matrix(Var<Real> a, Var<Real> b) {
  require_rank(a, 2, "cosine_matrix");
  require_rank(b, 2, "cosine_matrix");
  require_same_graph(a, b, "cosine_matrix");
  const std::size_t n = a.value().dim(0);
  const std::size_t m = b.value().dim(0);
  const std::size_t c = a.value().dim(1);
  if (b.value().dim(1) != c)
    throw ShapeError("cosine_matrix: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));

  struct Normalized {
    Tensor<Real> unit;
    std::vector<Real> norm;
  };
  auto normalize = [c](const Tensor<Real>& x) {
    Normalized out{x, std::vector<Real>(x.dim(0))};
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const Real nrm =
          std::sqrt(kernels::dot(c, x.raw() + r * c, x.raw() + r * c));
      if (!(nrm > 0))
        throw std::domain_error("cosine similarity of a zero vector");
      out.norm[r] = nrm;
      for (Real& v : out.unit.row(r)) v /= nrm;
    }
    return out;
  };
  auto na = std::make_shared<Normalized>(normalize(a.value()));
  auto nb = std::make_shared<Normalized>(normalize(b.value()));
  Tensor<Real> sims({n, m});
  kernels::matmul_nt(n, m, c, na->unit.raw(), nb->unit.raw(), sims.raw(),
                     false);

  return a.graph().push(std::move(sims), [a, b, na, nb, n, m, c](
                                             Graph<Real>& g,
                                             const Tensor<Real>& dout) {
    // d unit_a = dS * unit_b ; d unit_b = dS^T * unit_a
    Tensor<Real> du_a({n, c});
    Tensor<Real> du_b({m, c});
    kernels::matmul_nn(n, c, m, dout.raw(), nb->unit.raw(), du_a.raw(), false);
    kernels::matmul_tn(m, c, n, dout.raw(), na->unit.raw(), du_b.raw(), false);
    // Through x / |x|: dx = (du - u (u . du)) / |x|
    auto project = [c](const Normalized& nz, const Tensor<Real>& du,
                       Tensor<Real>& dx) {
      for (std::size_t r = 0; r < du.dim(0); ++r) {
        const Real* u = nz.unit.raw() + r * c;
        const Real* d = du.raw() + r * c;
        const Real proj = kernels::dot(c, u, d);
        const Real inv = Real{1} / nz.norm[r];
        Real* out = dx.raw() + r * c;
        for (std::size_t k = 0; k < c; ++k) out[k] += (d[k] - u[k] * proj) * inv;
      }
    };
    project(*na, du_a, g.grad(a));
    project(*nb, du_b, g.grad(b));
  });
}

template <class Real>
Var<Real> info_nce(Var<Real> similarities, Real temperature,
                   bool literal_denominator) {
  require_rank(similarities, 2, "info_nce");
  const std::size_t n = similarities.value().dim(0);
  if (similarities.value().dim(1) != n)
    throw ShapeError("info_nce: similarity matrix must be square");
  if (n < 2) throw std::invalid_argument("info_nce: batch size must be >= 2");
  if (!(temperature > 0))
    throw std::invalid_argument("info_nce: temperature must be positive");

  const auto& s = similarities.value();
  // Row-wise softmax over the denominator terms, kept for backward.
  auto softmax = std::make_shared<Tensor<Real>>(Shape{n, n});
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (literal_denominator && j == i) continue;
      mx = std::max(mx, s[i * n + j] / temperature);
    }
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (literal_denominator && j == i) continue;
      const Real e = std::exp(s[i * n + j] / temperature - mx);
      (*softmax)[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) (*softmax)[i * n + j] /= z;
    total += -s[i * n + i] / temperature + mx + std::log(z);
  }
  const Real inv_n = Real{1} / static_cast<Real>(n);
  return similarities.graph().push(
      Tensor<Real>::scalar(total * inv_n),
      [similarities, softmax, n, inv_n, temperature](Graph<Real>& g,
                                                     const Tensor<Real>& dout) {
        Tensor<Real>& ds = g.grad(similarities);
        const Real coeff = dout[0] * inv_n / temperature;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j)
            ds[i * n + j] += coeff * (*softmax)[i * n + j];
          ds[i * n + i] -= coeff;
        }
      });
}

template <class Real>
Var<Real> bce_triplet(Var<Real> positive_score, Var<Real> negative_score) {
  require_same_graph(positive_score, negative_score, "bce_triplet");
  if (positive_score.size() != 1 || negative_score.size() != 1)
    throw ShapeError("bce_triplet: scores must be scalars");
  const Real sp = positive_score.value()[0];
  const Real sn = negative_score.value()[0];
  const Real loss = softplus(-sp) + softplus(sn);
  return positive_score.graph().push(
      Tensor<Real>::scalar(loss),
      [positive_score, negative_score, sp, sn](Graph<Real>& g,
                                               const Tensor<Real>& dout) {
        g.grad(positive_score)[0] -= dout[0] * sigmoid(-sp);
        g.grad(negative_score)[0] += dout[0] * sigmoid(sn);
      });
}

#define STACKDEDUP_INSTANTIATE(R)                                              \
  template Var<R> constant<R>(Graph<R>&, Tensor<R>);                           \
  template Var<R> param<R>(Graph<R>&, Parameter<R>&);                          \
  template Var<R> embedding<R>(Graph<R>&, Parameter<R>&,                       \
                               std::span<const std::int32_t>);                 \
  template Var<R> linear<R>(Var<R>, Parameter<R>&, Parameter<R>&);             \
  template Var<R> relu<R>(Var<R>);                                             \
  template Var<R> mean_rows<R>(Var<R>);                                        \
  template Var<R> max_rows<R>(Var<R>);                                         \
  template Var<R> final_hidden<R>(Var<R>);                                     \
  template Var<R> concat<R>(std::span<const Var<R>>);                          \
  template Var<R> stack<R>(std::span<const Var<R>>);                           \
  template Var<R> add_to_rows<R>(Var<R>, Var<R>, const std::vector<bool>&);    \
  template Var<R> add<R>(Var<R>, Var<R>);                                      \
  template Var<R> scale<R>(Var<R>, R);                                         \
  template Var<R> sum<R>(Var<R>);                                              \
  template Var<R> mean<R>(std::span<const Var<R>>);                            \
  template Var<R> cosine_matrix<R>(Var<R>, Var<R>);                            \
  template Var<R> info_nce<R>(Var<R>, R, bool);                                \
  template Var<R> bce_triplet<R>(Var<R>, Var<R>);

STACKDEDUP_INSTANTIATE(float)
STACKDEDUP_INSTANTIATE(double)

}  // namespace stackdedup::nn::ops
