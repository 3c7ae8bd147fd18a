#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gmseg {

/// Element types the engine is instantiated for. float is the training
/// default; double exists for gradient verification.
template <typename T>
concept Scalar = std::same_as<T, float> || std::same_as<T, double>;

using Shape = std::vector<std::size_t>;

/// Runtime tag for the element type; the value is the byte width.
enum class Precision : unsigned char { Float32 = 4, Float64 = 8 };

template <Scalar T>
constexpr Precision precision_of() {
  return sizeof(T) == 4 ? Precision::Float32 : Precision::Float64;
}

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

template <Scalar T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty unless the node takes part in differentiation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into the grads of self.inputs.
  std::function<void(Node& self)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
  }
};

}  // namespace detail

/// Dense row-major array that doubles as a node of the reverse-mode graph.
/// Copies share storage; use clone() for a deep copy.
template <Scalar T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  /// Empty until a backward pass (or ensure_grad) allocates it.
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value);
  void zero_grad();

  /// Accumulates d(this)/d(leaf) into every reachable requires_grad tensor.
  /// `this` must hold exactly one element.
  void backward() const;

  /// Deep copy of the data, detached from any graph.
  Tensor clone() const;
  /// Graph-less copy; same as clone().
  Tensor detach() const;

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node);

 private:
  NodePtr node_;
};

/// Thread-local switch that stops ops from recording graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Builds an op result. When gradients are enabled and some input requires
/// them, the result records `inputs` and `backward`; otherwise both are dropped.
template <Scalar T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<typename Tensor<T>::NodePtr> inputs,
                      std::function<void(detail::Node<T>&)> backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gmseg
