#include "mfd/manifold.hpp"

#include <iostream>
#include <numeric>

#include "mfd/ops.hpp"

namespace mfd {

namespace {

void require_feature_pair(const char* op, const Tensor& fs, const Tensor& ft) {
  if (fs.rank() != 3 || ft.rank() != 3) {
    throw ShapeError(std::string(op) + ": features must be rank 3, got " +
                     shape_str(fs.shape()) + " and " + shape_str(ft.shape()));
  }
  if (fs.dim(0) != ft.dim(0) || fs.dim(1) != ft.dim(1)) {
    throw ShapeError(std::string(op) + ": batch/patch dims differ, " +
                     shape_str(fs.shape()) + " vs " + shape_str(ft.shape()));
  }
}

// Rows [row_begin, row_end) of a (B, N, D) tensor viewed as (B*N, D).
Tensor slice_rows(const Tensor& f, int64_t d, int64_t row_begin, int64_t row_count) {
  std::vector<int64_t> src(static_cast<size_t>(row_count * d));
  for (int64_t r = 0; r < row_count; ++r) {
    for (int64_t c = 0; c < d; ++c) {
      src[static_cast<size_t>(r * d + c)] = (row_begin + r) * d + c;
    }
  }
  return gather_linear(f, std::move(src), {row_count, d});
}

// Patch position j across the batch: (B, D) from a (B, N, D) tensor.
Tensor slice_position(const Tensor& f, int64_t j) {
  const int64_t b = f.dim(0), n = f.dim(1), d = f.dim(2);
  std::vector<int64_t> src(static_cast<size_t>(b * d));
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t c = 0; c < d; ++c) {
      src[static_cast<size_t>(i * d + c)] = (i * n + j) * d + c;
    }
  }
  return gather_linear(f, std::move(src), {b, d});
}

Tensor normalized_map(const Tensor& rows2d) {
  return gram(normalize_last_dim(rows2d, kNormalizeEps));
}

}  // namespace

Tensor relation_map(const Tensor& f_normalized) {
  if (f_normalized.rank() != 2) {
    throw ShapeError("relation_map: expected rank 2, got " +
                     shape_str(f_normalized.shape()));
  }
  return gram(f_normalized);
}

Tensor full_manifold_loss(const Tensor& fs, const Tensor& ft, int64_t oracle_cap) {
  require_feature_pair("full_manifold_loss", fs, ft);
  const int64_t rows = fs.dim(0) * fs.dim(1);
  if (rows > oracle_cap) {
    throw ContractError("full_manifold_loss: " + std::to_string(rows) +
                        " rows exceed the oracle cap of " + std::to_string(oracle_cap) +
                        "; use the decoupled losses for training");
  }
  Tensor ms = normalized_map(reshape_psi(fs));
  Tensor mt = normalized_map(reshape_psi(ft));
  return frob_sq_diff(ms, mt);
}

Tensor intra_loss(const Tensor& fs, const Tensor& ft) {
  require_feature_pair("intra_loss", fs, ft);
  const int64_t b = fs.dim(0), n = fs.dim(1);
  const int64_t ds = fs.dim(2), dt = ft.dim(2);
  Tensor acc;
  for (int64_t i = 0; i < b; ++i) {
    Tensor ms = normalized_map(slice_rows(fs, ds, i * n, n));
    Tensor mt = normalized_map(slice_rows(ft, dt, i * n, n));
    Tensor gap = frob_sq_diff(ms, mt);
    acc = acc.defined() ? add(acc, gap) : gap;
  }
  return scale(acc, 1.0 / static_cast<double>(b));
}

Tensor inter_loss(const Tensor& fs, const Tensor& ft) {
  require_feature_pair("inter_loss", fs, ft);
  const int64_t n = fs.dim(1);
  Tensor acc;
  for (int64_t j = 0; j < n; ++j) {
    Tensor ms = normalized_map(slice_position(fs, j));
    Tensor mt = normalized_map(slice_position(ft, j));
    Tensor gap = frob_sq_diff(ms, mt);
    acc = acc.defined() ? add(acc, gap) : gap;
  }
  return scale(acc, 1.0 / static_cast<double>(n));
}

SampleIndices sample_indices(int64_t b, int64_t n, int64_t k, Rng& rng) {
  if (k < 1) throw ConfigError("sample_indices: K must be >= 1");
  const int64_t rows = b * n;
  SampleIndices out;
  out.seed = rng.seed();
  if (k <= rows) {
    // Partial Fisher-Yates over the row pool.
    std::vector<int64_t> pool(static_cast<size_t>(rows));
    std::iota(pool.begin(), pool.end(), 0);
    for (int64_t i = 0; i < k; ++i) {
      const int64_t j = i + rng.uniform_int(rows - i);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    out.indices.assign(pool.begin(), pool.begin() + k);
  } else {
    std::cerr << "warning: sampling " << k << " rows from " << rows
              << " with replacement\n";
    out.with_replacement = true;
    out.indices.resize(static_cast<size_t>(k));
    for (auto& v : out.indices) v = rng.uniform_int(rows);
  }
  return out;
}

Tensor random_loss(const Tensor& fs, const Tensor& ft, const SampleIndices& idx) {
  require_feature_pair("random_loss", fs, ft);
  const int64_t rows = fs.dim(0) * fs.dim(1);
  const int64_t k = static_cast<int64_t>(idx.indices.size());
  for (int64_t r : idx.indices) {
    if (r < 0 || r >= rows) {
      throw ContractError("random_loss: index " + std::to_string(r) +
                          " outside [0," + std::to_string(rows) + ")");
    }
  }
  auto gather_sampled = [&](const Tensor& f) {
    const int64_t d = f.dim(2);
    std::vector<int64_t> src(static_cast<size_t>(k * d));
    for (int64_t i = 0; i < k; ++i) {
      for (int64_t c = 0; c < d; ++c) {
        src[static_cast<size_t>(i * d + c)] = idx.indices[static_cast<size_t>(i)] * d + c;
      }
    }
    return gather_linear(f, std::move(src), {k, d});
  };
  Tensor ms = normalized_map(gather_sampled(fs));
  Tensor mt = normalized_map(gather_sampled(ft));
  return frob_sq_diff(ms, mt);
}

Tensor merge_patches(const Tensor& f, int64_t grid_h, int64_t grid_w,
                     const MergeSetting& setting) {
  if (f.rank() != 3) {
    throw ShapeError("merge_patches: expected rank 3, got " + shape_str(f.shape()));
  }
  const int64_t b = f.dim(0), n = f.dim(1), d = f.dim(2);
  if (n != grid_h * grid_w) {
    throw ShapeError("merge_patches: N=" + std::to_string(n) + " != grid " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  if (setting.h < 1 || setting.h > grid_h || setting.w < 1 || setting.w > grid_w) {
    throw ConfigError("merge_patches: setting (" + std::to_string(setting.h) + "," +
                      std::to_string(setting.w) + ") outside [1," +
                      std::to_string(grid_h) + "]x[1," + std::to_string(grid_w) + "]");
  }
  const int64_t bh = (grid_h + setting.h - 1) / setting.h;  // block height
  const int64_t bw = (grid_w + setting.w - 1) / setting.w;  // block width
  const int64_t merged_n = setting.h * setting.w;
  const int64_t merged_d = bh * bw * d;

  std::vector<int64_t> src(static_cast<size_t>(b * merged_n * merged_d));
  size_t pos = 0;
  for (int64_t img = 0; img < b; ++img) {
    for (int64_t oh = 0; oh < setting.h; ++oh) {
      for (int64_t ow = 0; ow < setting.w; ++ow) {
        for (int64_t ph = 0; ph < bh; ++ph) {
          for (int64_t pw = 0; pw < bw; ++pw) {
            const int64_t gh = oh * bh + ph;
            const int64_t gw = ow * bw + pw;
            const bool real = gh < grid_h && gw < grid_w;
            for (int64_t c = 0; c < d; ++c) {
              src[pos++] = real ? (img * n + gh * grid_w + gw) * d + c : -1;
            }
          }
        }
      }
    }
  }
  return gather_linear(f, std::move(src), {b, merged_n, merged_d});
}

DecoupledLoss decoupled_loss(const Tensor& fs, const Tensor& ft,
                             const DecoupledWeights& w, const SampleIndices& idx) {
  if (w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0) {
    throw ConfigError("decoupled_loss: weights must be non-negative");
  }
  Tensor intra = intra_loss(fs, ft);
  Tensor inter = inter_loss(fs, ft);
  Tensor random = random_loss(fs, ft, idx);

  DecoupledLoss out;
  out.intra = intra.item();
  out.inter = inter.item();
  out.random = random.item();

  // Zero-weight terms stay out of the graph so disabled terms cost no
  // backward work and cannot poison gradients.
  Tensor total;
  auto accumulate = [&total](const Tensor& term, double weight) {
    if (weight == 0.0) return;
    Tensor scaled = scale(term, weight);
    total = total.defined() ? add(total, scaled) : scaled;
  };
  accumulate(intra, w.alpha);
  accumulate(inter, w.beta);
  accumulate(random, w.gamma);
  out.total = total.defined() ? total : Tensor::scalar(0.0);
  return out;
}

}  // namespace mfd
