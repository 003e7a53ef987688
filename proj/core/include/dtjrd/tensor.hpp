#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dtjrd/errors.hpp"

namespace dtjrd {

using Shape = std::vector<std::size_t>;

enum class DType { kFloat32, kFloat64 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kFloat32; }
template <>
constexpr DType dtype_of<double>() { return DType::kFloat64; }

const char* dtype_name(DType dtype);
DType parse_dtype(const std::string& name);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the recorded tape. Leaves have no backward function.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backward;

  bool is_leaf() const { return !backward; }
  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool enabled();

 private:
  bool previous_;
};

/// Dense row-major array with optional reverse-mode gradient.
///
/// Copies share the underlying storage (handle semantics, like a framework
/// tensor); use clone() for an independent buffer. Values produced by ops on
/// tensors that require grad record the op on a tape; backward() walks it.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<const T> data() const { return node_->value; }
  // Direct writes bypass the tape; only valid on leaves.
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// New leaf holding a copy of the values, detached from any tape.
  Tensor clone() const;
  /// Leaf sharing no history; values are copied.
  Tensor detach() const { return clone(); }

  /// Reverse accumulation from this scalar. Leaf gradients accumulate across
  /// calls; intermediate gradients are reset at the start of each call.
  void backward() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dtjrd
