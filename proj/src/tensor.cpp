#include "driveflow/tensor.hpp"

#include <atomic>
#include <sstream>

#include "driveflow/error.hpp"

namespace driveflow {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local Tape* g_active_tape = nullptr;

detail::NodePtr make_node(Shape shape, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_string(shape));
    }
  }
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  auto node = std::make_shared<detail::Node>();
  node->value.resize(static_cast<Eigen::Index>(shape_numel(shape)));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Eigen::VectorXd& detail::Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Eigen::VectorXd::Zero(value.size());
  return grad;
}

Tensor::Tensor() : node_(make_node({1}, false)) { node_->value.setZero(); }

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : node_(make_node(std::move(shape), requires_grad)) {
  node_->value.setConstant(fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_node(std::move(shape), requires_grad)) {
  if (values.size() != numel()) {
    throw DimensionError("tensor of shape " + shape_string(node_->shape) +
                         " needs " + std::to_string(numel()) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->value = Eigen::Map<const Eigen::VectorXd>(
      values.data(), static_cast<Eigen::Index>(values.size()));
}

Tensor::Tensor(Shape shape, const Eigen::VectorXd& values, bool requires_grad)
    : node_(make_node(std::move(shape), requires_grad)) {
  if (static_cast<std::size_t>(values.size()) != numel()) {
    throw DimensionError("tensor of shape " + shape_string(node_->shape) +
                         " needs " + std::to_string(numel()) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->value = values;
}

double Tensor::item() const {
  if (!is_scalar()) {
    throw ContractError("item() needs a single-element tensor, got " +
                        shape_string(shape()));
  }
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

Eigen::VectorXd Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Eigen::VectorXd::Zero(node_->value.size());
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value, false); }

void Tape::record(std::vector<detail::NodePtr> inputs, detail::NodePtr output,
                  BackwardFn backward) {
  entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.is_scalar()) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  const auto& entries = tape.entries();
  std::size_t end = entries.size();
  while (end > 0 && entries[end - 1].output != loss.node()) --end;
  if (end == 0) throw ContractError("backward(): loss was not recorded on this tape");

  loss.node()->grad_buffer()[0] += 1.0;
  for (std::size_t i = end; i-- > 0;) {
    const Tape::Entry& entry = entries[i];
    if (entry.output->grad.size() == 0) continue;  // not on a path to the loss
    entry.backward(entry.output->grad);
  }
}

}  // namespace driveflow
