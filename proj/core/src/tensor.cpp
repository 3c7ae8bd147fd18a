#include "gmseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "gmseg/errors.hpp"

namespace gmseg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <Scalar T>
Tensor<T>::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<T>(shape_numel(shape), T{0}), requires_grad) {}

template <Scalar T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <Scalar T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <Scalar T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <Scalar T>
Tensor<T> Tensor<T>::from_node(NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <Scalar T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

template <Scalar T>
void Tensor<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
}

template <Scalar T>
void Tensor<T>::zero_grad() {
  if (node_->requires_grad) {
    node_->grad.assign(node_->data.size(), T{0});
  } else {
    node_->grad.clear();
  }
}

template <Scalar T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->data, false);
}

template <Scalar T>
Tensor<T> Tensor<T>::detach() const {
  return clone();
}

template <Scalar T>
void Tensor<T>::backward() const {
  using Node = detail::Node<T>;
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " +
                        shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; the reverse of the post-order is a valid
  // topological order for propagating gradients.
  enum class Mark { InProgress, Done };
  std::unordered_map<const Node*, Mark> marks;
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  marks[node_.get()] = Mark::InProgress;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (!child->requires_grad) continue;
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks.emplace(child, Mark::InProgress);
        stack.emplace_back(child, 0);
      } else if (it->second == Mark::InProgress) {
        throw InternalError("cycle detected in computation graph");
      }
    } else {
      marks[node] = Mark::Done;
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    node->ensure_grad();
    for (auto& input : node->inputs) {
      if (input->requires_grad) input->ensure_grad();
    }
    node->backward(*node);
  }
}

template <Scalar T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<typename Tensor<T>::NodePtr> inputs,
                      std::function<void(detail::Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_mode_enabled()) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& n) { return n && n->requires_grad; });
  if (!needs) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.inputs = std::move(inputs);
  node.backward = std::move(backward);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result<float>(Shape, std::vector<float>,
                                          std::vector<Tensor<float>::NodePtr>,
                                          std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result<double>(Shape, std::vector<double>,
                                            std::vector<Tensor<double>::NodePtr>,
                                            std::function<void(detail::Node<double>&)>);

}  // namespace gmseg
