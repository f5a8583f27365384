// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>

#include "stackdedup/kernels.hpp"

namespace stackdedup::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::kOpenMP};

bool use_parallel(std::size_t work) {
  return g_backend.load(std::memory_order_relaxed) == Backend::kOpenMP &&
         work >= kParallelThreshold;
}
}  // namespace

void set_backend(Backend backend) { g_backend.store(backend); }
Backend backend() { return g_backend.load(); }

template <class T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  if (use_parallel(m * n * k) && m > 1)
    omp::matmul_nt(m, n, k, a, b, c, accumulate);
  else
    serial::matmul_nt(m, n, k, a, b, c, accumulate);
}

template <class T>
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  if (use_parallel(m * n * k) && m > 1)
    omp::matmul_nn(m, n, k, a, b, c, accumulate);
  else
    serial::matmul_nn(m, n, k, a, b, c, accumulate);
}

template <class T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  if (use_parallel(m * n * k) && m > 1)
    omp::matmul_tn(m, n, k, a, b, c, accumulate);
  else
    serial::matmul_tn(m, n, k, a, b, c, accumulate);
}

template <class T>
void gemv(std::size_t m, std::size_t k, const T* a, const T* x, T* y,
          bool accumulate) {
  if (use_parallel(m * k))
    omp::gemv(m, k, a, x, y, accumulate);
  else
    serial::gemv(m, k, a, x, y, accumulate);
}

template <class T>
void gemv_t(std::size_t m, std::size_t k, const T* a, const T* x, T* y,
            bool accumulate) {
  if (use_parallel(m * k))
    omp::gemv_t(m, k, a, x, y, accumulate);
  else
    serial::gemv_t(m, k, a, x, y, accumulate);
}

template <class T>
void ger(std::size_t m, std::size_t n, const T* x, const T* y, T* a) {
  if (use_parallel(m * n))
    omp::ger(m, n, x, y, a);
  else
    serial::ger(m, n, x, y, a);
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

}  // namespace stackdedup::kernels

namespace stackdedup::kernels {

void row_scores(std::size_t n, std::size_t dim, const float* rows,
                const float* q, double* out) {
  if (use_parallel(n * dim) && n > 1)
    omp::row_scores(n, dim, rows, q, out);
  else
    serial::row_scores(n, dim, rows, q, out);
}

}  // namespace stackdedup::kernels
