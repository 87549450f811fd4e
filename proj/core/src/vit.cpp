#include "mfd/vit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mfd/ops.hpp"

namespace mfd {

void VitConfig::validate() const {
  if (image_h < 1 || image_w < 1 || channels < 1) {
    throw ConfigError("vit: image dims must be positive");
  }
  if (patch_size < 1 || image_h % patch_size != 0 || image_w % patch_size != 0) {
    throw ConfigError("vit: image " + std::to_string(image_h) + "x" +
                      std::to_string(image_w) + " not divisible by patch size " +
                      std::to_string(patch_size));
  }
  if (num_patches() < 1) throw ConfigError("vit: at least one patch required");
  if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0) {
    throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (num_layers < 1) throw ConfigError("vit: num_layers must be >= 1");
  if (num_classes < 2) throw ConfigError("vit: num_classes must be >= 2");
}

bool VitConfig::same_architecture(const VitConfig& o) const {
  return image_h == o.image_h && image_w == o.image_w && channels == o.channels &&
         patch_size == o.patch_size && embed_dim == o.embed_dim &&
         num_heads == o.num_heads && num_layers == o.num_layers &&
         num_classes == o.num_classes && use_class_token == o.use_class_token;
}

void TapSet::validate(int64_t num_layers) const {
  std::set<int> seen;
  for (int l : layers) {
    if (l < 1 || l > num_layers) {
      throw ConfigError("tap index " + std::to_string(l) + " outside [1," +
                        std::to_string(num_layers) + "]");
    }
    if (!seen.insert(l).second) {
      throw ConfigError("duplicate tap index " + std::to_string(l));
    }
  }
}

Tensor patchify(const Tensor& images, int64_t patch_size) {
  if (images.rank() != 4) {
    throw ShapeError("patchify: expected (B,H,W,C), got " + shape_str(images.shape()));
  }
  const int64_t b = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (patch_size < 1 || h % patch_size != 0 || w % patch_size != 0) {
    throw ShapeError("patchify: " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by patch size " + std::to_string(patch_size));
  }
  const int64_t gh = h / patch_size, gw = w / patch_size;
  const int64_t n = gh * gw, pd = patch_size * patch_size * c;
  std::vector<int64_t> src(static_cast<size_t>(b * n * pd));
  size_t pos = 0;
  for (int64_t img = 0; img < b; ++img) {
    for (int64_t pi = 0; pi < gh; ++pi) {
      for (int64_t pj = 0; pj < gw; ++pj) {
        for (int64_t di = 0; di < patch_size; ++di) {
          for (int64_t dj = 0; dj < patch_size; ++dj) {
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t y = pi * patch_size + di;
              const int64_t x = pj * patch_size + dj;
              src[pos++] = ((img * h + y) * w + x) * c + ch;
            }
          }
        }
      }
    }
  }
  return gather_linear(images, std::move(src), {b, n, pd});
}

namespace {

// x (B, N, Din) through a (Din, Dout) weight and (Dout) bias.
Tensor linear3(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t bn = x.dim(0) * x.dim(1);
  Tensor flat = reshape(x, {bn, x.dim(2)});
  Tensor out = add_tail_broadcast(matmul(flat, w), b);
  return reshape(out, {x.dim(0), x.dim(1), w.dim(1)});
}

// (B, N, D) -> (B*H, N, D/H)
Tensor split_heads(const Tensor& x, int64_t heads) {
  const int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  const int64_t hd = d / heads;
  std::vector<int64_t> src(static_cast<size_t>(x.numel()));
  size_t pos = 0;
  for (int64_t img = 0; img < b; ++img) {
    for (int64_t hh = 0; hh < heads; ++hh) {
      for (int64_t t = 0; t < n; ++t) {
        for (int64_t e = 0; e < hd; ++e) {
          src[pos++] = (img * n + t) * d + hh * hd + e;
        }
      }
    }
  }
  return gather_linear(x, std::move(src), {b * heads, n, hd});
}

// (B*H, N, D/H) -> (B, N, D)
Tensor merge_heads(const Tensor& x, int64_t heads) {
  const int64_t bh = x.dim(0), n = x.dim(1), hd = x.dim(2);
  const int64_t b = bh / heads, d = heads * hd;
  std::vector<int64_t> src(static_cast<size_t>(x.numel()));
  size_t pos = 0;
  for (int64_t img = 0; img < b; ++img) {
    for (int64_t t = 0; t < n; ++t) {
      for (int64_t hh = 0; hh < heads; ++hh) {
        for (int64_t e = 0; e < hd; ++e) {
          src[pos++] = ((img * heads + hh) * n + t) * hd + e;
        }
      }
    }
  }
  return gather_linear(x, std::move(src), {b, n, d});
}

Tensor multi_head_attention(const Tensor& h, const EncoderLayerParams& p, int64_t heads) {
  const int64_t hd = h.dim(2) / heads;
  Tensor q = split_heads(linear3(h, p.wq, p.bq), heads);
  Tensor k = split_heads(linear3(h, p.wk, p.bk), heads);
  Tensor v = split_heads(linear3(h, p.wv, p.bv), heads);
  Tensor scores = scale(bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor ctx = merge_heads(bmm(softmax_last(scores), v), heads);
  return linear3(ctx, p.wo, p.bo);
}

}  // namespace

Tensor embed_patches(const Tensor& patches, const Tensor& proj_w, const Tensor& proj_b,
                     const Tensor& cls, const Tensor& pos) {
  if (patches.rank() != 3) {
    throw ShapeError("embed_patches: expected (B,N,PD), got " + shape_str(patches.shape()));
  }
  if (patches.dim(2) != proj_w.dim(0)) {
    throw ShapeError("embed_patches: patch dim " + std::to_string(patches.dim(2)) +
                     " vs projection " + shape_str(proj_w.shape()));
  }
  const int64_t b = patches.dim(0), n = patches.dim(1), d = proj_w.dim(1);
  Tensor x = linear3(patches, proj_w, proj_b);
  if (cls.defined()) {
    // Zero-padded layouts of the tokens and the class row, summed.
    const int64_t np = n + 1;
    std::vector<int64_t> xsrc(static_cast<size_t>(b * np * d), -1);
    std::vector<int64_t> csrc(static_cast<size_t>(b * np * d), -1);
    for (int64_t img = 0; img < b; ++img) {
      for (int64_t e = 0; e < d; ++e) {
        csrc[static_cast<size_t>((img * np) * d + e)] = e;
      }
      for (int64_t t = 0; t < n; ++t) {
        for (int64_t e = 0; e < d; ++e) {
          xsrc[static_cast<size_t>((img * np + t + 1) * d + e)] = (img * n + t) * d + e;
        }
      }
    }
    x = add(gather_linear(x, std::move(xsrc), {b, np, d}),
            gather_linear(cls, std::move(csrc), {b, np, d}));
  }
  if (pos.rank() != 2 || pos.dim(0) != x.dim(1) || pos.dim(1) != d) {
    throw ShapeError("embed_patches: positional " + shape_str(pos.shape()) +
                     " vs sequence (" + std::to_string(x.dim(1)) + "," +
                     std::to_string(d) + ")");
  }
  return add_tail_broadcast(x, pos);
}

Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p, int64_t num_heads) {
  Tensor x1 = add(x, multi_head_attention(layer_norm(x, p.ln1_g, p.ln1_b), p, num_heads));
  Tensor mlp = linear3(gelu(linear3(layer_norm(x1, p.ln2_g, p.ln2_b), p.w1, p.b1)),
                       p.w2, p.b2);
  return add(x1, mlp);
}

VitModel::VitModel(const VitConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int64_t d = cfg_.embed_dim;
  auto trunc = [&rng](Shape shape) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = rng.trunc_normal(0.02);
    return Tensor::from_data(std::move(shape), std::move(data), true);
  };
  auto zeros = [](Shape shape) { return Tensor::zeros(std::move(shape), true); };
  auto ones = [](Shape shape) { return Tensor::full(std::move(shape), 1.0, true); };

  proj_w_ = trunc({cfg_.patch_dim(), d});
  proj_b_ = zeros({d});
  if (cfg_.use_class_token) cls_ = trunc({d});
  pos_ = trunc({cfg_.seq_len(), d});
  for (int64_t l = 0; l < cfg_.num_layers; ++l) {
    EncoderLayerParams p;
    p.ln1_g = ones({d});
    p.ln1_b = zeros({d});
    p.wq = trunc({d, d});
    p.bq = zeros({d});
    p.wk = trunc({d, d});
    p.bk = zeros({d});
    p.wv = trunc({d, d});
    p.bv = zeros({d});
    p.wo = trunc({d, d});
    p.bo = zeros({d});
    p.ln2_g = ones({d});
    p.ln2_b = zeros({d});
    p.w1 = trunc({d, kMlpRatio * d});
    p.b1 = zeros({kMlpRatio * d});
    p.w2 = trunc({kMlpRatio * d, d});
    p.b2 = zeros({d});
    layers_.push_back(std::move(p));
  }
  lnf_g_ = ones({d});
  lnf_b_ = zeros({d});
  head_w_ = trunc({d, cfg_.num_classes});
  head_b_ = zeros({cfg_.num_classes});
}

ForwardResult VitModel::forward(const Tensor& images, const TapSet& taps) const {
  taps.validate(cfg_.num_layers);
  if (images.rank() != 4 || images.dim(1) != cfg_.image_h ||
      images.dim(2) != cfg_.image_w || images.dim(3) != cfg_.channels) {
    throw ShapeError("vit forward: images " + shape_str(images.shape()) +
                     " do not match config");
  }
  const int64_t b = images.dim(0);
  const int64_t n = cfg_.num_patches();
  const int64_t d = cfg_.embed_dim;

  Tensor x = embed_patches(patchify(images, cfg_.patch_size), proj_w_, proj_b_, cls_, pos_);
  ForwardResult res;
  for (int64_t l = 0; l < cfg_.num_layers; ++l) {
    x = encoder_layer(x, layers_[static_cast<size_t>(l)], cfg_.num_heads);
    if (!all_finite(x.data())) {
      throw NumericError("non-finite activations after encoder layer " +
                         std::to_string(l + 1));
    }
    const int tap_index = static_cast<int>(l + 1);
    if (std::find(taps.layers.begin(), taps.layers.end(), tap_index) !=
        taps.layers.end()) {
      if (cfg_.use_class_token) {
        std::vector<int64_t> src(static_cast<size_t>(b * n * d));
        size_t pos = 0;
        for (int64_t img = 0; img < b; ++img) {
          for (int64_t t = 0; t < n; ++t) {
            for (int64_t e = 0; e < d; ++e) {
              src[pos++] = (img * (n + 1) + t + 1) * d + e;
            }
          }
        }
        res.taps[tap_index] = gather_linear(x, std::move(src), {b, n, d});
      } else {
        res.taps[tap_index] = x;
      }
    }
  }

  x = layer_norm(x, lnf_g_, lnf_b_);
  Tensor pooled;
  if (cfg_.use_class_token) {
    std::vector<int64_t> src(static_cast<size_t>(b * d));
    for (int64_t img = 0; img < b; ++img) {
      for (int64_t e = 0; e < d; ++e) {
        src[static_cast<size_t>(img * d + e)] = img * (n + 1) * d + e;
      }
    }
    pooled = gather_linear(x, std::move(src), {b, d});
  } else {
    Tensor ones = Tensor::full({b, 1, n}, 1.0 / static_cast<double>(n));
    pooled = reshape(bmm(ones, x), {b, d});
  }
  res.logits = add_tail_broadcast(matmul(pooled, head_w_), head_b_);
  return res;
}

std::vector<std::pair<std::string, Tensor>> VitModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("patch_proj.weight", proj_w_);
  out.emplace_back("patch_proj.bias", proj_b_);
  if (cls_.defined()) out.emplace_back("cls_token", cls_);
  out.emplace_back("pos_embed", pos_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& p = layers_[l];
    const std::string base = "layers." + std::to_string(l) + ".";
    out.emplace_back(base + "ln1.weight", p.ln1_g);
    out.emplace_back(base + "ln1.bias", p.ln1_b);
    out.emplace_back(base + "attn.wq", p.wq);
    out.emplace_back(base + "attn.bq", p.bq);
    out.emplace_back(base + "attn.wk", p.wk);
    out.emplace_back(base + "attn.bk", p.bk);
    out.emplace_back(base + "attn.wv", p.wv);
    out.emplace_back(base + "attn.bv", p.bv);
    out.emplace_back(base + "attn.wo", p.wo);
    out.emplace_back(base + "attn.bo", p.bo);
    out.emplace_back(base + "ln2.weight", p.ln2_g);
    out.emplace_back(base + "ln2.bias", p.ln2_b);
    out.emplace_back(base + "mlp.w1", p.w1);
    out.emplace_back(base + "mlp.b1", p.b1);
    out.emplace_back(base + "mlp.w2", p.w2);
    out.emplace_back(base + "mlp.b2", p.b2);
  }
  out.emplace_back("ln_final.weight", lnf_g_);
  out.emplace_back("ln_final.bias", lnf_b_);
  out.emplace_back("head.weight", head_w_);
  out.emplace_back("head.bias", head_b_);
  return out;
}

std::vector<Tensor> VitModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

int64_t VitModel::parameter_count() const {
  int64_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

uint64_t VitModel::parameter_checksum() const {
  // FNV-1a over the raw bytes of every parameter, in declaration order.
  uint64_t h = 1469598103934665603ULL;
  for (const auto& t : parameters()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
    for (size_t i = 0; i < t.data().size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void VitModel::set_trainable(bool trainable) {
  for (auto& t : parameters()) t.set_requires_grad(trainable);
}

void VitModel::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

void VitModel::copy_parameters_from(const VitModel& other) {
  if (!cfg_.same_architecture(other.cfg_)) {
    throw ConfigError("copy_parameters_from: architecture mismatch");
  }
  auto dst = parameters();
  auto src = other.parameters();
  for (size_t i = 0; i < dst.size(); ++i) {
    Tensor d = dst[i];
    std::copy(src[i].data().begin(), src[i].data().end(), d.mutable_data().begin());
  }
}

}  // namespace mfd
