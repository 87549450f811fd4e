#include "mfd/ops.hpp"

#include <cmath>
#include <utility>

#include "mfd/kernels.hpp"

namespace mfd {

namespace {

using Apply = std::function<void(std::span<const double>,
                                 const std::vector<std::span<double>>&)>;

Tensor finish(const char* op, Shape shape, std::vector<double> data,
              std::vector<Tensor> inputs, Apply apply) {
  for (int64_t d : shape) {
    if (d <= 0) {
      throw ShapeError(std::string(op) + ": non-positive extent in " + shape_str(shape));
    }
  }
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) rg = rg || t.requires_grad();
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = rg;
  if (rg) {
    auto rec = std::make_shared<GradRecord>();
    rec->op = op;
    rec->inputs = std::move(inputs);
    rec->apply = std::move(apply);
    node->record = std::move(rec);
  }
  return Tensor(std::move(node));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (int64_t i = 0; i < b.numel(); ++i) out[i] += b.data()[i];
  return finish("add", a.shape(), std::move(out), {a, b},
                [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  for (size_t i = 0; i < g.size(); ++i) {
                    if (!gin[0].empty()) gin[0][i] += g[i];
                    if (!gin[1].empty()) gin[1][i] += g[i];
                  }
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (int64_t i = 0; i < b.numel(); ++i) out[i] -= b.data()[i];
  return finish("sub", a.shape(), std::move(out), {a, b},
                [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  for (size_t i = 0; i < g.size(); ++i) {
                    if (!gin[0].empty()) gin[0][i] += g[i];
                    if (!gin[1].empty()) gin[1][i] -= g[i];
                  }
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(static_cast<size_t>(a.numel()));
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.data()[i] * b.data()[i];
  return finish("mul", a.shape(), std::move(out), {a, b},
                [a, b](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  for (size_t i = 0; i < g.size(); ++i) {
                    if (!gin[0].empty()) gin[0][i] += g[i] * b.data()[i];
                    if (!gin[1].empty()) gin[1][i] += g[i] * a.data()[i];
                  }
                });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(static_cast<size_t>(a.numel()));
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = c * a.data()[i];
  return finish("scale", a.shape(), std::move(out), {a},
                [c](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (size_t i = 0; i < g.size(); ++i) gin[0][i] += c * g[i];
                });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return finish("sum", {1}, {acc}, {a},
                [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (auto& slot : gin[0]) slot += g[0];
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m * n));
  kernels::gemm(a.data().data(), b.data().data(), out.data(), m, k, n);
  return finish("matmul", {m, n}, std::move(out), {a, b},
                [a, b, m, k, n](std::span<const double> g,
                                const std::vector<std::span<double>>& gin) {
                  if (!gin[0].empty()) {
                    kernels::gemm_nt(g.data(), b.data().data(), gin[0].data(), m, n, k, true);
                  }
                  if (!gin[1].empty()) {
                    kernels::gemm_tn(a.data().data(), g.data(), gin[1].data(), m, k, n, true);
                  }
                });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dims " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(static_cast<size_t>(m * n));
  kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return finish("matmul_nt", {m, n}, std::move(out), {a, b},
                [a, b, m, k, n](std::span<const double> g,
                                const std::vector<std::span<double>>& gin) {
                  // dA = G * B, dB = G^T * A
                  if (!gin[0].empty()) {
                    kernels::gemm(g.data(), b.data().data(), gin[0].data(), m, n, k, true);
                  }
                  if (!gin[1].empty()) {
                    kernels::gemm_tn(g.data(), a.data().data(), gin[1].data(), m, n, k, true);
                  }
                });
}

Tensor gram(const Tensor& a) {
  require_rank("gram", a, 2);
  const int64_t r = a.dim(0), d = a.dim(1);
  std::vector<double> out(static_cast<size_t>(r * r));
  kernels::gram(a.data().data(), out.data(), r, d);
  return finish("gram", {r, r}, std::move(out), {a},
                [a, r, d](std::span<const double> g,
                          const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  // dA = (G + G^T) * A
                  std::vector<double> gs(static_cast<size_t>(r * r));
                  for (int64_t i = 0; i < r; ++i) {
                    for (int64_t j = 0; j < r; ++j) {
                      gs[i * r + j] = g[i * r + j] + g[j * r + i];
                    }
                  }
                  kernels::gemm(gs.data(), a.data().data(), gin[0].data(), r, r, d, true);
                });
}

namespace {

Tensor bmm_impl(const char* op, const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(op, a, 3);
  require_rank(op, b, 3);
  const int64_t s = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  const int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != s || bk != k) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(s * m * n));
  for (int64_t i = 0; i < s; ++i) {
    const double* ai = a.data().data() + i * m * k;
    const double* bi = b.data().data() + i * (transpose_b ? n * k : k * n);
    double* oi = out.data() + i * m * n;
    if (transpose_b) {
      kernels::gemm_nt(ai, bi, oi, m, k, n);
    } else {
      kernels::gemm(ai, bi, oi, m, k, n);
    }
  }
  return finish(op, {s, m, n}, std::move(out), {a, b},
                [a, b, s, m, k, n, transpose_b](std::span<const double> g,
                                                const std::vector<std::span<double>>& gin) {
                  for (int64_t i = 0; i < s; ++i) {
                    const double* gi = g.data() + i * m * n;
                    const double* ai = a.data().data() + i * m * k;
                    const double* bi = b.data().data() + i * (transpose_b ? n * k : k * n);
                    if (!gin[0].empty()) {
                      double* gai = gin[0].data() + i * m * k;
                      if (transpose_b) {
                        kernels::gemm(gi, bi, gai, m, n, k, true);
                      } else {
                        kernels::gemm_nt(gi, bi, gai, m, n, k, true);
                      }
                    }
                    if (!gin[1].empty()) {
                      double* gbi = gin[1].data() + i * (transpose_b ? n * k : k * n);
                      if (transpose_b) {
                        kernels::gemm_tn(gi, ai, gbi, m, n, k, true);
                      } else {
                        kernels::gemm_tn(ai, gi, gbi, m, k, n, true);
                      }
                    }
                  }
                });
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) { return bmm_impl("bmm", a, b, false); }
Tensor bmm_nt(const Tensor& a, const Tensor& b) { return bmm_impl("bmm_nt", a, b, true); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return finish("reshape", std::move(shape), std::move(out), {a},
                [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                });
}

Tensor reshape_psi(const Tensor& a) {
  require_rank("reshape_psi", a, 3);
  return reshape(a, {a.dim(0) * a.dim(1), a.dim(2)});
}

Tensor gather_linear(const Tensor& a, std::vector<int64_t> src, Shape out_shape) {
  if (shape_numel(out_shape) != static_cast<int64_t>(src.size())) {
    throw ShapeError("gather_linear: index map length " + std::to_string(src.size()) +
                     " vs output " + shape_str(out_shape));
  }
  const int64_t n = a.numel();
  std::vector<double> out(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    const int64_t s = src[i];
    if (s < -1 || s >= n) {
      throw ContractError("gather_linear: index " + std::to_string(s) +
                          " out of range for " + std::to_string(n) + " elements");
    }
    out[i] = s < 0 ? 0.0 : a.data()[s];
  }
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(src));
  return finish("gather_linear", std::move(out_shape), std::move(out), {a},
                [idx](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (size_t i = 0; i < g.size(); ++i) {
                    const int64_t s = (*idx)[i];
                    if (s >= 0) gin[0][s] += g[i];
                  }
                });
}

Tensor normalize_last_dim(const Tensor& a, double eps) {
  if (a.rank() < 1) throw ShapeError("normalize_last_dim: rank >= 1 required");
  if (eps <= 0.0) throw ConfigError("normalize_last_dim: eps must be positive");
  const int64_t d = a.dim(a.rank() - 1);
  const int64_t rows = a.numel() / d;
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kernels::normalize_rows(a.data().data(), out.data(), rows, d, eps);
  auto saved = std::make_shared<std::vector<double>>(out);
  return finish("normalize_last_dim", a.shape(), std::move(out), {a},
                [a, saved, rows, d, eps](std::span<const double> g,
                                         const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (int64_t r = 0; r < rows; ++r) {
                    const double* xi = a.data().data() + r * d;
                    const double* yi = saved->data() + r * d;
                    const double* gi = g.data() + r * d;
                    double* oi = gin[0].data() + r * d;
                    double sq = 0.0;
                    for (int64_t p = 0; p < d; ++p) sq += xi[p] * xi[p];
                    const double norm = std::sqrt(sq);
                    if (norm > eps) {
                      double dot = 0.0;
                      for (int64_t p = 0; p < d; ++p) dot += gi[p] * yi[p];
                      for (int64_t p = 0; p < d; ++p) oi[p] += (gi[p] - yi[p] * dot) / norm;
                    } else {
                      for (int64_t p = 0; p < d; ++p) oi[p] += gi[p] / eps;
                    }
                  }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank >= 1 required");
  const int64_t d = x.dim(x.rank() - 1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) + " elements");
  }
  const int64_t rows = x.numel() / d;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * d;
    double mean = 0.0;
    for (int64_t p = 0; p < d; ++p) mean += xi[p];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t p = 0; p < d; ++p) {
      const double c = xi[p] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int64_t p = 0; p < d; ++p) {
      const double xh = (xi[p] - mean) * is;
      (*xhat)[r * d + p] = xh;
      out[r * d + p] = gamma.data()[p] * xh + beta.data()[p];
    }
  }
  return finish("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                [gamma, xhat, inv_std, rows, d](std::span<const double> g,
                                                const std::vector<std::span<double>>& gin) {
                  for (int64_t r = 0; r < rows; ++r) {
                    const double* gi = g.data() + r * d;
                    const double* xh = xhat->data() + r * d;
                    if (!gin[1].empty() || !gin[2].empty()) {
                      for (int64_t p = 0; p < d; ++p) {
                        if (!gin[1].empty()) gin[1][p] += gi[p] * xh[p];
                        if (!gin[2].empty()) gin[2][p] += gi[p];
                      }
                    }
                    if (gin[0].empty()) continue;
                    double sum_h = 0.0, sum_hx = 0.0;
                    for (int64_t p = 0; p < d; ++p) {
                      const double h = gi[p] * gamma.data()[p];
                      sum_h += h;
                      sum_hx += h * xh[p];
                    }
                    const double is = (*inv_std)[r];
                    const double inv_d = 1.0 / static_cast<double>(d);
                    double* oi = gin[0].data() + r * d;
                    for (int64_t p = 0; p < d; ++p) {
                      const double h = gi[p] * gamma.data()[p];
                      oi[p] += is * (h - sum_h * inv_d - xh[p] * sum_hx * inv_d);
                    }
                  }
                });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return finish("gelu", x.shape(), std::move(out), {x},
                [x](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (size_t i = 0; i < g.size(); ++i) {
                    const double v = x.data()[i];
                    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                    gin[0][i] += g[i] * (cdf + v * pdf);
                  }
                });
}

namespace {

// Shared forward for softmax and log-softmax over the last axis.
void softmax_rows(const double* x, double* out, int64_t rows, int64_t d, bool log_form) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * d;
    double* oi = out + r * d;
    double mx = xi[0];
    for (int64_t p = 1; p < d; ++p) mx = std::max(mx, xi[p]);
    double denom = 0.0;
    for (int64_t p = 0; p < d; ++p) denom += std::exp(xi[p] - mx);
    if (log_form) {
      const double lse = mx + std::log(denom);
      for (int64_t p = 0; p < d; ++p) oi[p] = xi[p] - lse;
    } else {
      for (int64_t p = 0; p < d; ++p) oi[p] = std::exp(xi[p] - mx) / denom;
    }
  }
}

}  // namespace

Tensor softmax_last(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax_last: rank >= 1 required");
  const int64_t d = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / d;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  softmax_rows(x.data().data(), out.data(), rows, d, false);
  auto saved = std::make_shared<std::vector<double>>(out);
  return finish("softmax_last", x.shape(), std::move(out), {x},
                [saved, rows, d](std::span<const double> g,
                                 const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (int64_t r = 0; r < rows; ++r) {
                    const double* yi = saved->data() + r * d;
                    const double* gi = g.data() + r * d;
                    double* oi = gin[0].data() + r * d;
                    double dot = 0.0;
                    for (int64_t p = 0; p < d; ++p) dot += gi[p] * yi[p];
                    for (int64_t p = 0; p < d; ++p) oi[p] += yi[p] * (gi[p] - dot);
                  }
                });
}

Tensor log_softmax_last(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("log_softmax_last: rank >= 1 required");
  const int64_t d = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / d;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  softmax_rows(x.data().data(), out.data(), rows, d, true);
  auto saved = std::make_shared<std::vector<double>>(out);
  return finish("log_softmax_last", x.shape(), std::move(out), {x},
                [saved, rows, d](std::span<const double> g,
                                 const std::vector<std::span<double>>& gin) {
                  if (gin[0].empty()) return;
                  for (int64_t r = 0; r < rows; ++r) {
                    const double* yi = saved->data() + r * d;
                    const double* gi = g.data() + r * d;
                    double* oi = gin[0].data() + r * d;
                    double gsum = 0.0;
                    for (int64_t p = 0; p < d; ++p) gsum += gi[p];
                    for (int64_t p = 0; p < d; ++p) oi[p] += gi[p] - std::exp(yi[p]) * gsum;
                  }
                });
}

Tensor frob_sq_diff(const Tensor& a, const Tensor& b) {
  require_same_shape("frob_sq_diff", a, b);
  const double acc = kernels::frob_sq_diff(a.data().data(), b.data().data(), a.numel());
  return finish("frob_sq_diff", {1}, {acc}, {a, b},
                [a, b](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  const double s = 2.0 * g[0];
                  for (int64_t i = 0; i < a.numel(); ++i) {
                    const double diff = a.data()[i] - b.data()[i];
                    if (!gin[0].empty()) gin[0][i] += s * diff;
                    if (!gin[1].empty()) gin[1][i] -= s * diff;
                  }
                });
}

Tensor add_tail_broadcast(const Tensor& x, const Tensor& v) {
  const int64_t vn = v.numel();
  if (vn == 0 || x.numel() % vn != 0) {
    throw ShapeError("add_tail_broadcast: " + shape_str(v.shape()) +
                     " does not tile " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] += v.data()[i % vn];
  return finish("add_tail_broadcast", x.shape(), std::move(out), {x, v},
                [vn](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                  for (size_t i = 0; i < g.size(); ++i) {
                    if (!gin[0].empty()) gin[0][i] += g[i];
                    if (!gin[1].empty()) gin[1][static_cast<int64_t>(i) % vn] += g[i];
                  }
                });
}

Tensor one_hot(const std::vector<int64_t>& labels, int64_t classes) {
  std::vector<double> out(labels.size() * static_cast<size_t>(classes), 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ContractError("one_hot: label " + std::to_string(labels[i]) +
                          " outside [0," + std::to_string(classes) + ")");
    }
    out[i * static_cast<size_t>(classes) + static_cast<size_t>(labels[i])] = 1.0;
  }
  return Tensor::from_data({static_cast<int64_t>(labels.size()), classes}, std::move(out));
}

}  // namespace mfd
