#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfd/manifold.hpp"
#include "mfd/tensor.hpp"
#include "mfd/vit.hpp"

namespace mfd {

// Ordered (teacher_layer, student_layer) pairs, 1-based.
struct LayerPairing {
  std::vector<std::pair<int, int>> pairs;

  void validate(int64_t teacher_depth, int64_t student_depth) const;
  TapSet teacher_taps() const;
  TapSet student_taps() const;
};

// Named layer-selection schemes: "shallow", "deep", "shallow_deep",
// "shallow_medium_deep", "uniform". shallow_deep with count 8 is the
// default first-4 + last-4 pairing.
LayerPairing select_layers(const std::string& scheme, int teacher_depth,
                           int student_depth, int count);

// 1.0 when the teacher is at least as large/strong as the student on the
// given metric, 0.5 otherwise; an explicit override wins.
double resolve_lambda(double teacher_metric, double student_metric,
                      std::optional<double> override_value = std::nullopt);

// (1-lambda) * CE(student, labels) + lambda * tau^2 * KL(teacher || student)
// with temperature-softened distributions; both reductions are means over
// the batch, and the teacher side carries no gradient.
Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
               const std::vector<int64_t>& labels, double lambda, double tau);

struct DistillConfig {
  std::optional<double> lambda_override;  // resolved from model sizes if unset
  double tau = 1.0;
  DecoupledWeights weights;      // alpha, beta, gamma
  int64_t sample_count = 192;    // K
  std::string layer_scheme = "shallow_deep";
  int layer_count = 8;
  std::optional<LayerPairing> explicit_pairing;
  std::vector<MergeSetting> merge;  // empty: none; one entry: all layers; else per pair

  double learning_rate = 1e-3;
  double weight_decay = 0.05;
  int64_t steps = 600;
  int64_t batch_size = 16;
  int64_t eval_every = 50;
  uint64_t seed = 0;
  bool share_random_indices = false;

  void validate() const;
};

struct LayerLossTerms {
  int teacher_layer = 0;
  int student_layer = 0;
  double intra = 0.0;
  double inter = 0.0;
  double random = 0.0;
};

struct TotalLossResult {
  Tensor total;
  double kd = 0.0;
  std::vector<LayerLossTerms> layers;

  double intra_sum() const;
  double inter_sum() const;
  double random_sum() const;
};

// kd_loss on logits plus the decoupled manifold loss summed over the
// paired (optionally merged) taps. The teacher forward runs without
// gradients.
TotalLossResult total_loss(const Tensor& images, const std::vector<int64_t>& labels,
                           const VitModel& student, const VitModel& teacher,
                           const DistillConfig& cfg, double lambda,
                           const LayerPairing& pairing, Rng& sample_rng);

}  // namespace mfd
