// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// OpenMP versions of the serial kernels. Each output element is accumulated
// in the same order as its serial counterpart, so both backends produce
// bit-identical results; only the assignment of rows to threads differs.

#include <omp.h>

#include <algorithm>
#include <cstdint>

#include "stackdedup/kernels.hpp"

namespace stackdedup::kernels::omp {

namespace {
using Index = std::int64_t;
constexpr std::size_t kColumnBlock = 256;
}  // namespace

template <class T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < rows; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T v = dot(k, ai, b + j * k);
      ci[j] = accumulate ? ci[j] + v : v;
    }
  }
}

template <class T>
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < rows; ++i) {
    T* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[i * k + p], b + p * n, ci);
  }
}

template <class T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < rows; ++i) {
    T* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[p * m + i], b + p * n, ci);
  }
}

template <class T>
void gemv(std::size_t m, std::size_t k, const T* a, const T* x, T* y,
          bool accumulate) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < rows; ++i) {
    const T v = dot(k, a + i * k, x);
    y[i] = accumulate ? y[i] + v : v;
  }
}

template <class T>
void gemv_t(std::size_t m, std::size_t k, const T* a, const T* x, T* y,
            bool accumulate) {
  // Threads own disjoint column blocks of y; rows are visited in order.
  const Index blocks = static_cast<Index>((k + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (Index blk = 0; blk < blocks; ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk) * kColumnBlock;
    const std::size_t width = std::min(kColumnBlock, k - lo);
    T* yb = y + lo;
    if (!accumulate) std::fill(yb, yb + width, T{0});
    for (std::size_t i = 0; i < m; ++i) axpy(width, x[i], a + i * k + lo, yb);
  }
}

template <class T>
void ger(std::size_t m, std::size_t n, const T* x, const T* y, T* a) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < rows; ++i) axpy(n, x[i], y, a + i * n);
}

#define STACKDEDUP_INSTANTIATE(T)                                             \
  template void matmul_nt<T>(std::size_t, std::size_t, std::size_t, const T*, \
                             const T*, T*, bool);                             \
  template void matmul_nn<T>(std::size_t, std::size_t, std::size_t, const T*, \
                             const T*, T*, bool);                             \
  template void matmul_tn<T>(std::size_t, std::size_t, std::size_t, const T*, \
                             const T*, T*, bool);                             \
  template void gemv<T>(std::size_t, std::size_t, const T*, const T*, T*,     \
                        bool);                                                \
  template void gemv_t<T>(std::size_t, std::size_t, const T*, const T*, T*,   \
                          bool);                                              \
  template void ger<T>(std::size_t, std::size_t, const T*, const T*, T*);

STACKDEDUP_INSTANTIATE(float)
STACKDEDUP_INSTANTIATE(double)

}  // namespace stackdedup::kernels::omp

namespace stackdedup::kernels::omp {

void row_scores(std::size_t n, std::size_t dim, const float* rows,
                const float* q, double* out) {
  const Index count = static_cast<Index>(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < count; ++i) {
    const float* r = rows + i * dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j)
      acc += static_cast<double>(r[j]) * static_cast<double>(q[j]);
    out[i] = acc;
  }
}

}  // namespace stackdedup::kernels::omp
