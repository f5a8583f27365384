// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major linear-algebra kernels.
//
// Every kernel exists twice: a plain serial loop nest kept as the reference
// implementation, and an OpenMP version that splits the outer loop across
// threads. The dispatching entry points in `stackdedup::kernels` pick one
// based on the configured backend and the problem size. Tests check the two
// against each other; bench/ times them.
#pragma once

#include <cstddef>

namespace stackdedup::kernels {

enum class Backend { kSerial, kOpenMP };

// Process-wide choice used by the dispatching functions below.
void set_backend(Backend backend);
Backend backend();

// Below this many multiply-adds the OpenMP backend still runs serially.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

#define STACKDEDUP_KERNEL_DECLS                                                \
  /* C[m,n] (+)= A[m,k] * B[n,k]^T */                                          \
  template <class T>                                                           \
  void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,      \
                 const T* b, T* c, bool accumulate);                           \
  /* C[m,n] (+)= A[m,k] * B[k,n] */                                            \
  template <class T>                                                           \
  void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,      \
                 const T* b, T* c, bool accumulate);                           \
  /* C[m,n] (+)= A[k,m]^T * B[k,n] */                                          \
  template <class T>                                                           \
  void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,      \
                 const T* b, T* c, bool accumulate);                           \
  /* y[m] (+)= A[m,k] * x[k] */                                                \
  template <class T>                                                           \
  void gemv(std::size_t m, std::size_t k, const T* a, const T* x, T* y,        \
            bool accumulate);                                                  \
  /* y[k] (+)= A[m,k]^T * x[m] */                                              \
  template <class T>                                                           \
  void gemv_t(std::size_t m, std::size_t k, const T* a, const T* x, T* y,      \
              bool accumulate);                                                \
  /* A[m,n] += x[m] * y[n]^T */                                                \
  template <class T>                                                           \
  void ger(std::size_t m, std::size_t n, const T* x, const T* y, T* a);    \
  /* out[i] = sum_j rows[i,j] * q[j], accumulated in double, in order */       \
  void row_scores(std::size_t n, std::size_t dim, const float* rows,           \
                  const float* q, double* out);

namespace serial {
STACKDEDUP_KERNEL_DECLS
}  // namespace serial

namespace omp {
STACKDEDUP_KERNEL_DECLS
}  // namespace omp

STACKDEDUP_KERNEL_DECLS

#undef STACKDEDUP_KERNEL_DECLS

template <class T>
T dot(std::size_t n, const T* a, const T* b) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace stackdedup::kernels
