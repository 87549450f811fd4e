#pragma once

#include <cstdint>
#include <vector>

#include "mfd/rng.hpp"
#include "mfd/tensor.hpp"

namespace mfd {

// Patch-level manifold relation maps and the distillation losses built on
// them. Features enter raw; each loss L2-normalizes along the feature axis
// internally before building its maps.

inline constexpr double kNormalizeEps = 1e-12;

// Maximum row count accepted by the full-map loss; it exists as a
// verification oracle, not a training path.
inline constexpr int64_t kOracleMaxRows = 4096;

// Gram matrix of an already-normalized (R, D) feature matrix. Symmetric
// with unit diagonal for nonzero rows.
Tensor relation_map(const Tensor& f_normalized);

// Frobenius-squared gap between the (BN x BN) relation maps of two
// (B, N, D) feature batches. Refuses B*N > oracle_cap.
Tensor full_manifold_loss(const Tensor& fs, const Tensor& ft,
                          int64_t oracle_cap = kOracleMaxRows);

// Mean over images of the per-image (N x N) map gaps.
Tensor intra_loss(const Tensor& fs, const Tensor& ft);

// Mean over patch positions of the per-position (B x B) map gaps.
Tensor inter_loss(const Tensor& fs, const Tensor& ft);

struct SampleIndices {
  std::vector<int64_t> indices;  // rows of psi(F), each in [0, B*N)
  uint64_t seed = 0;
  bool with_replacement = false;
};

// K rows drawn uniformly without replacement from [0, B*N); falls back to
// drawing with replacement (and flags it) when K > B*N.
SampleIndices sample_indices(int64_t b, int64_t n, int64_t k, Rng& rng);

// Map gap over the K sampled rows, shared between student and teacher.
// No averaging factor.
Tensor random_loss(const Tensor& fs, const Tensor& ft, const SampleIndices& idx);

struct MergeSetting {
  int64_t h = 0;
  int64_t w = 0;
};

// Merges every ceil(H/H') x ceil(W/W') adjacent patches of a (B, H*W, D)
// batch into one, zero-padding ragged edges; output is
// (B, H'*W', D * ceil(H/H') * ceil(W/W')).
Tensor merge_patches(const Tensor& f, int64_t grid_h, int64_t grid_w,
                     const MergeSetting& setting);

struct DecoupledWeights {
  double alpha = 4.0;
  double beta = 0.1;
  double gamma = 0.2;
};

struct DecoupledLoss {
  Tensor total;   // alpha*intra + beta*inter + gamma*random
  double intra;   // unweighted component values, for logging
  double inter;
  double random;
};

// Weighted sum of the three decoupled terms. Terms with zero weight are
// still evaluated for the breakdown but excluded from the gradient graph.
DecoupledLoss decoupled_loss(const Tensor& fs, const Tensor& ft,
                             const DecoupledWeights& w, const SampleIndices& idx);

}  // namespace mfd
