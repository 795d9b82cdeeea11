#include "incpvae/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "incpvae/errors.hpp"
#include "incpvae/random.hpp"

namespace incpvae {
namespace {

std::atomic<std::uint64_t> next_node_id{1};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<float> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->values = std::move(values);
  return node;
}

// Iterative post-order DFS over gradient-carrying nodes.
std::vector<detail::Node*> sorted_nodes(detail::Node* root) {
  std::vector<detail::Node*> order;
  if (!root->requires_grad) return order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      detail::Node* parent = node->parents[next_parent++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values))) {
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::randn(Shape shape, std::uint64_t seed) {
  Rng rng(seed, Stream::kReparam);
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<float>(rng.normal());
  return Tensor(std::move(shape), std::move(values));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->values.size() : 0; }

std::span<const float> Tensor::values() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->values;
}

std::span<float> Tensor::mutable_values() {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (!node_->leaf) throw ContractError("values of a computed tensor are immutable");
  return node_->values;
}

float Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() needs exactly one element, shape is " + shape_string(shape()));
  }
  return node_->values[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_ || node_->leaf; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

std::uint64_t Tensor::node_id() const { return node_ ? node_->id : 0; }
const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(shape()));
  }
  auto order = sorted_nodes(node_.get());
  if (order.empty()) return;
  for (auto* node : order) {
    if (!node->leaf) node->grad.assign(node->values.size(), 0.0f);
  }
  if (node_->leaf) {
    accumulate_grad(*this, std::vector<float>{1.0f});
    return;
  }
  node_->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (!node->leaf && node->backward) node->backward(node->grad);
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<float> values,
                   std::vector<Tensor> inputs, detail::BackwardFn backward) {
  auto node = new_node(std::move(shape), std::move(values));
  node->op = op;
  node->leaf = false;
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.node());
  }
  return Tensor(std::move(node));
}

void accumulate_grad(const Tensor& t, std::span<const float> g) {
  if (!t.requires_grad()) return;
  auto& node = *t.node();
  if (g.size() != node.values.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) +
                         " for tensor of shape " + shape_string(node.shape));
  }
  if (node.grad.empty()) {
    node.grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

std::vector<std::uint64_t> topological_order(const Tensor& root) {
  std::vector<std::uint64_t> ids;
  if (!root.defined()) return ids;
  for (auto* node : sorted_nodes(root.node().get())) ids.push_back(node->id);
  return ids;
}

}  // namespace incpvae
