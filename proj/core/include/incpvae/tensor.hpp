#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace incpvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

// Receives the gradient of the node's output and accumulates into the
// gradients of its inputs (captured by the closure).
using BackwardFn = std::function<void(std::span<const float> out_grad)>;

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

// Dense row-major float tensor, and a handle onto one node of a
// define-by-run computation graph.
//
// Copies share the node. Values of non-leaf tensors are immutable; leaves
// (parameters, inputs) expose mutable_values() so an optimizer can update
// them between graphs. Gradients accumulate in leaves across backward()
// calls until zero_grad().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  // Rank-0 tensor.
  static Tensor scalar(float value);
  // Standard-normal deviates from Rng(seed, stream).
  static Tensor randn(Shape shape, std::uint64_t seed);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> values() const;
  std::span<float> mutable_values();
  float item() const;
  float operator[](std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const float> grad() const;
  void zero_grad();

  // Copy of the values as a new constant leaf; no gradient flows through it.
  Tensor detach() const;

  // Reverse-mode sweep from this scalar. Intermediate gradients are reset on
  // every call; leaf gradients accumulate.
  void backward() const;

  std::uint64_t node_id() const;
  const char* op_name() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Building blocks for differentiable operations. `backward` is only stored
// when at least one input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<float> values,
                   std::vector<Tensor> inputs, detail::BackwardFn backward);

// Adds `g` into t's gradient buffer; no-op when t does not require grad.
void accumulate_grad(const Tensor& t, std::span<const float> g);

// Node ids reachable from `root` through gradient-carrying edges, inputs
// before consumers. backward() walks this in reverse.
std::vector<std::uint64_t> topological_order(const Tensor& root);

}  // namespace incpvae
