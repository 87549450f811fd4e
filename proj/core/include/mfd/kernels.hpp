#pragma once

#include <cmath>
#include <cstdint>

namespace mfd::kernels {

// Dense row-major kernels shared by the autograd ops (double) and the
// forward-only benchmark path (float or double).

// C = A(M,K) * B(K,N); accumulates into C when accumulate is set.
template <class T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
          bool accumulate = false) {
  if (!accumulate) {
    for (int64_t i = 0; i < m * n; ++i) c[i] = T(0);
  }
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C = A(M,K) * B(N,K)^T.
template <class T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
             bool accumulate = false) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      T& slot = c[i * n + j];
      slot = accumulate ? slot + acc : acc;
    }
  }
}

// C = A(M,K)^T * B(M,N), i.e. C(K,N).
template <class T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
             bool accumulate = false) {
  if (!accumulate) {
    for (int64_t i = 0; i < k * n; ++i) c[i] = T(0);
  }
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      T* crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// M = A(R,D) * A^T, each pair computed once and mirrored, so the result is
// symmetric bit-for-bit.
template <class T>
void gram(const T* a, T* out, int64_t r, int64_t d) {
  for (int64_t i = 0; i < r; ++i) {
    const T* ri = a + i * d;
    for (int64_t j = i; j < r; ++j) {
      const T* rj = a + j * d;
      T acc = T(0);
      for (int64_t p = 0; p < d; ++p) acc += ri[p] * rj[p];
      out[i * r + j] = acc;
      out[j * r + i] = acc;
    }
  }
}

// Rows scaled to unit L2 norm; rows with norm <= eps are divided by eps.
template <class T>
void normalize_rows(const T* x, T* y, int64_t rows, int64_t d, T eps) {
  for (int64_t i = 0; i < rows; ++i) {
    const T* xi = x + i * d;
    T* yi = y + i * d;
    T sq = T(0);
    for (int64_t p = 0; p < d; ++p) sq += xi[p] * xi[p];
    const T norm = std::sqrt(sq);
    const T denom = norm > eps ? norm : eps;
    for (int64_t p = 0; p < d; ++p) yi[p] = xi[p] / denom;
  }
}

template <class T>
T frob_sq_diff(const T* a, const T* b, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace mfd::kernels
