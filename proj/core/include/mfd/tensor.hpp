#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfd {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Shape contract violated (rank or extent mismatch).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (backward on a non-scalar, untracked graph, bad index).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class Tensor;

// One recorded operation in the dynamic graph: the inputs it consumed and a
// closure that maps the output adjoint onto per-input adjoint buffers.
// grad_in[i] is empty when inputs[i] does not require gradients.
struct GradRecord {
  const char* op;
  std::vector<Tensor> inputs;
  std::function<void(std::span<const double> grad_out,
                     const std::vector<std::span<double>>& grad_in)>
      apply;
};

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::shared_ptr<GradRecord> record;  // null for leaves
};

// Dense double-precision tensor with value semantics over a shared node.
// Data is contiguous row-major; gradients accumulate into `grad`.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Validates that every element is finite.
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

  std::span<const double> data() const { return node_->data; }
  // Direct mutation; only valid while no graph references this tensor
  // (parameter updates between steps).
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Empty span until a backward pass has touched this tensor.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  double item() const;

  // Same data, detached from the graph, never requires grad.
  Tensor detach() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
  std::shared_ptr<TensorNode> node_;
};

// Accumulates d(loss)/d(t) into the grad buffer of every tensor with
// requires_grad reachable from `loss`. Adjoints are tracked per pass, so a
// second backward without zeroing doubles every gradient.
void backward(const Tensor& loss);

// Thread-local switch suppressing graph construction (evaluation, finite
// differences, frozen-teacher forwards).
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

bool grad_enabled();

bool all_finite(std::span<const double> xs);
// Throws NumericError mentioning `what` if any element is non-finite.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace mfd
