// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/kernels.hpp"

namespace stackdedup::kernels::serial {

template <class T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0;
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[i * k + p], b + p * n, ci);
  }
}

template <class T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0;
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[p * m + i], b + p * n, ci);
  }
}

template <class T>
void gemv(std::size_t m, std::size_t k, const T* a, const T* x, T* y,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T v = dot(k, a + i * k, x);
    y[i] = accumulate ? y[i] + v : v;
  }
}

template <class T>
void gemv_t(std::size_t m, std::size_t k, const T* a, const T* x, T* y,
            bool accumulate) {
  if (!accumulate)
    for (std::size_t j = 0; j < k; ++j) y[j] = 0;
  for (std::size_t i = 0; i < m; ++i) axpy(k, x[i], a + i * k, y);
}

template <class T>
void ger(std::size_t m, std::size_t n, const T* x, const T* y, T* a) {
  for (std::size_t i = 0; i < m; ++i) axpy(n, x[i], y, a + i * n);
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

}  // namespace stackdedup::kernels::serial

namespace stackdedup::kernels::serial {

void row_scores(std::size_t n, std::size_t dim, const float* rows,
                const float* q, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = rows + i * dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j)
      acc += static_cast<double>(r[j]) * static_cast<double>(q[j]);
    out[i] = acc;
  }
}

}  // namespace stackdedup::kernels::serial
