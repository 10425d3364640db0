#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace driveflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::uint64_t id = 0;

  /// Returns the gradient buffer, allocating zeros on first use.
  Eigen::VectorXd& grad_buffer();
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient.
///
/// Copies are shallow handles onto the same storage, which is what lets the
/// tape refer to activations and parameters without copying them. Use
/// `clone()` for an independent deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
  Tensor(Shape shape, const Eigen::VectorXd& values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return Tensor({1}, v); }
  static Tensor of(Shape shape, std::initializer_list<double> values) {
    return Tensor(std::move(shape), std::vector<double>(values));
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return static_cast<std::size_t>(node_->value.size()); }
  bool is_scalar() const { return numel() == 1; }

  std::span<const double> data() const {
    return {node_->value.data(), numel()};
  }
  /// Writable view; for parameter initialization and optimizer updates only.
  std::span<double> mutable_data() { return {node_->value.data(), numel()}; }
  const Eigen::VectorXd& values() const { return node_->value; }
  Eigen::VectorXd& mutable_values() { return node_->value; }

  double operator[](std::size_t i) const { return node_->value[static_cast<Eigen::Index>(i)]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return node_->grad.size() > 0; }
  /// Gradient view; zeros of the right length when nothing was accumulated.
  Eigen::VectorXd grad() const;
  void zero_grad() { node_->grad.resize(0); }

  Tensor clone() const;
  /// Same values, detached from any tape and without gradient tracking.
  Tensor detach() const { return clone(); }

  std::uint64_t id() const { return node_->id; }
  bool all_finite() const { return node_->value.allFinite(); }

  const detail::NodePtr& node() const { return node_; }
  static Tensor wrap(detail::NodePtr node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

/// Ordered record of differentiable operations executed while the tape is
/// active, in execution (topological) order.
class Tape {
 public:
  using BackwardFn = std::function<void(const Eigen::VectorXd& grad_out)>;

  struct Entry {
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    BackwardFn backward;
  };

  void record(std::vector<detail::NodePtr> inputs, detail::NodePtr output,
              BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Tape that operations on the current thread record onto, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
};

/// Activates a tape on the current thread for its lifetime. Scopes nest.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Reverse pass from a scalar loss. Every operation on the tape is visited at
/// most once, in reverse recording order; gradients accumulate into the
/// `grad` buffers of all tensors that require them.
void backward(const Tensor& loss, Tape& tape);

}  // namespace driveflow
