#include "mfd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mfd {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data,
                                      bool requires_grad) {
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

thread_local bool g_grad_enabled = true;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), 0.0);
  return Tensor(make_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), value);
  return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (!all_finite(data)) {
    throw NumericError("non-finite value in tensor of shape " + shape_str(shape));
  }
  return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->data = node_->data;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t.data())) {
    throw NumericError("non-finite values in " + what);
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  TensorNode* root = loss.node().get();
  if (!root->record) {
    throw ContractError("backward on a tensor with no recorded operations");
  }

  // Post-order DFS over the recorded graph (iterative; graphs can be deep).
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    const auto& rec = node->record;
    if (rec && next_child < rec->inputs.size()) {
      TensorNode* child = rec->inputs[next_child].node().get();
      ++next_child;
      if (child->record && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  // Per-pass adjoints, accumulated into persistent .grad at the end. This
  // keeps repeated backward passes additive rather than compounding.
  std::unordered_map<TensorNode*, std::vector<double>> adjoint;
  adjoint[root] = {1.0};

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* node = *it;
    auto a = adjoint.find(node);
    if (a == adjoint.end()) continue;  // no gradient flows through this node
    const auto& rec = node->record;
    std::vector<std::span<double>> grad_in(rec->inputs.size());
    for (size_t i = 0; i < rec->inputs.size(); ++i) {
      TensorNode* in = rec->inputs[i].node().get();
      if (!in->requires_grad) continue;
      auto [slot, inserted] = adjoint.try_emplace(in);
      if (inserted) slot->second.assign(in->data.size(), 0.0);
      grad_in[i] = slot->second;
    }
    rec->apply(a->second, grad_in);
  }

  for (auto& [node, adj] : adjoint) {
    if (!node->requires_grad) continue;
    if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
    for (size_t i = 0; i < adj.size(); ++i) node->grad[i] += adj[i];
  }
}

}  // namespace mfd
