#pragma once

#include <vector>

#include "mfd/tensor.hpp"

namespace mfd {

// Differentiable operations on Tensor. Every op records a GradRecord when
// gradients are enabled and at least one input requires them.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);     // (M,K)x(K,N)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // (M,K)x(N,K)^T
// A * A^T with enforced symmetry (each pair computed once, mirrored).
Tensor gram(const Tensor& a);
Tensor bmm(const Tensor& a, const Tensor& b);     // (S,M,K)x(S,K,N)
Tensor bmm_nt(const Tensor& a, const Tensor& b);  // (S,M,K)x(S,N,K)^T

Tensor reshape(const Tensor& a, Shape shape);
// (D1,D2,D3) -> (D1*D2,D3), row-major flattening of the first two axes.
Tensor reshape_psi(const Tensor& a);

// out[i] = src[i] < 0 ? 0 : a.data[src[i]]. Backward scatter-adds. Covers
// row gathers, slices, permutations and zero-padded layouts.
Tensor gather_linear(const Tensor& a, std::vector<int64_t> src, Shape out_shape);

// Each slice along the last axis divided by max(L2 norm, eps).
Tensor normalize_last_dim(const Tensor& a, double eps = 1e-12);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor softmax_last(const Tensor& x);
Tensor log_softmax_last(const Tensor& x);

// Sum of squared elementwise differences, as a scalar.
Tensor frob_sq_diff(const Tensor& a, const Tensor& b);

// out[i] = x[i] + v[i mod numel(v)]; numel(v) must divide numel(x).
// Broadcasts a bias over rows or a positional table over a batch.
Tensor add_tail_broadcast(const Tensor& x, const Tensor& v);

// Constant indicator matrix (B, classes); labels checked against range.
Tensor one_hot(const std::vector<int64_t>& labels, int64_t classes);

}  // namespace mfd
