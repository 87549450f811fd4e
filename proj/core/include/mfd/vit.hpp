#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mfd/rng.hpp"
#include "mfd/tensor.hpp"

namespace mfd {

// MLP hidden width is always 4x the embedding dim (DeiT default).
inline constexpr int64_t kMlpRatio = 4;

struct VitConfig {
  int64_t image_h = 16;
  int64_t image_w = 16;
  int64_t channels = 1;
  int64_t patch_size = 4;
  int64_t embed_dim = 32;
  int64_t num_heads = 2;
  int64_t num_layers = 3;
  int64_t num_classes = 8;
  bool use_class_token = true;
  uint64_t seed = 0;

  int64_t patches_h() const { return image_h / patch_size; }
  int64_t patches_w() const { return image_w / patch_size; }
  int64_t num_patches() const { return patches_h() * patches_w(); }
  // Sequence length including the class token when present.
  int64_t seq_len() const { return num_patches() + (use_class_token ? 1 : 0); }
  int64_t patch_dim() const { return patch_size * patch_size * channels; }

  void validate() const;
  bool same_architecture(const VitConfig& other) const;
};

// Ordered 1-based layer indices whose post-layer features are captured.
struct TapSet {
  std::vector<int> layers;

  TapSet() = default;
  TapSet(std::initializer_list<int> xs) : layers(xs) {}
  explicit TapSet(std::vector<int> xs) : layers(std::move(xs)) {}

  void validate(int64_t num_layers) const;
  bool empty() const { return layers.empty(); }
};

struct ForwardResult {
  Tensor logits;                // (B, num_classes)
  std::map<int, Tensor> taps;   // layer index -> (B, N, D), class token removed
};

struct EncoderLayerParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

// (B, H, W, C) -> (B, N, P^2*C); patches enumerated row-major over the
// grid, pixels row-major then channel within a patch.
Tensor patchify(const Tensor& images, int64_t patch_size);

// Linear patch projection, optional class token prepend, positional add.
// cls may be undefined; pos has shape (N', D).
Tensor embed_patches(const Tensor& patches, const Tensor& proj_w, const Tensor& proj_b,
                     const Tensor& cls, const Tensor& pos);

// Pre-norm MSA + residual, then pre-norm MLP + residual.
Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p, int64_t num_heads);

class VitModel {
public:
  explicit VitModel(const VitConfig& cfg);

  const VitConfig& config() const { return cfg_; }

  ForwardResult forward(const Tensor& images, const TapSet& taps = {}) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  int64_t parameter_count() const;
  uint64_t parameter_checksum() const;

  void set_trainable(bool trainable);
  void zero_grad();
  // Copies parameter values from a model with the same architecture.
  void copy_parameters_from(const VitModel& other);

private:
  VitConfig cfg_;
  Tensor proj_w_, proj_b_;
  Tensor cls_;   // undefined when use_class_token is false
  Tensor pos_;
  std::vector<EncoderLayerParams> layers_;
  Tensor lnf_g_, lnf_b_;
  Tensor head_w_, head_b_;
};

}  // namespace mfd
