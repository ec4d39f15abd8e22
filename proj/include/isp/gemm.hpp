#pragma once

#include <cblas.h>

#include <cstdint>

namespace isp {

// Row-major matrix products used by the im2col convolution path.
// Float goes through BLAS; the generic version backs the 64-bit
// gradient-check instantiation (small shapes only).

// C(m,n) = A(m,k) * B(k,n)   [+= when accumulate]
template <typename T>
void gemm_nn(bool accumulate, int m, int n, int k, const T* A, const T* B, T* C) {
  for (int i = 0; i < m; ++i) {
    T* c = C + static_cast<std::int64_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T a = A[static_cast<std::int64_t>(i) * k + p];
      const T* b = B + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C(m,n) = A(k,m)^T * B(k,n)
template <typename T>
void gemm_tn(bool accumulate, int m, int n, int k, const T* A, const T* B, T* C) {
  if (!accumulate)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m) * n; ++i) C[i] = T(0);
  for (int p = 0; p < k; ++p) {
    const T* a = A + static_cast<std::int64_t>(p) * m;
    const T* b = B + static_cast<std::int64_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      T* c = C + static_cast<std::int64_t>(i) * n;
      const T av = a[i];
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C(m,n) = A(m,k) * B(n,k)^T
template <typename T>
void gemm_nt(bool accumulate, int m, int n, int k, const T* A, const T* B, T* C) {
  for (int i = 0; i < m; ++i) {
    const T* a = A + static_cast<std::int64_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const T* b = B + static_cast<std::int64_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += a[p] * b[p];
      T& c = C[static_cast<std::int64_t>(i) * n + j];
      c = accumulate ? c + acc : acc;
    }
  }
}

template <>
inline void gemm_nn<float>(bool accumulate, int m, int n, int k, const float* A,
                           const float* B, float* C) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0f, A, k, B, n,
              accumulate ? 1.0f : 0.0f, C, n);
}

template <>
inline void gemm_tn<float>(bool accumulate, int m, int n, int k, const float* A,
                           const float* B, float* C) {
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0f, A, m, B, n,
              accumulate ? 1.0f : 0.0f, C, n);
}

template <>
inline void gemm_nt<float>(bool accumulate, int m, int n, int k, const float* A,
                           const float* B, float* C) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0f, A, k, B, k,
              accumulate ? 1.0f : 0.0f, C, n);
}

}  // namespace isp
