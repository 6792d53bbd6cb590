#include "nifm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "nifm/error.hpp"

namespace nifm {

namespace {
thread_local bool t_grad_enabled = true;
thread_local MacCounter* t_mac_counter = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Buffer& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data.assign(data.begin(), data.end());
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

static const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw DomainError("use of an undefined tensor");
  return *node;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s),
                         static_cast<int>(axis));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
  checked(node_);
  if (!node_->is_leaf()) throw DomainError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  checked(node_);
  if (!node_->is_leaf()) throw DomainError("requires_grad can only be set on leaves");
  node_->requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return checked(node_).is_leaf(); }

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw GradientError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  checked(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  checked(node_);
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  auto node = std::make_shared<detail::Node>();
  node->shape = n.shape;
  node->data = n.data;
  return from_node(std::move(node));
}

void Tensor::backward() const { nifm::backward(*this); }

ComputationTape ComputationTape::record(const Tensor& root) {
  ComputationTape tape;
  tape.root_ = root.node();
  if (!tape.root_ || !tape.root_->requires_grad) return tape;

  // Iterative post-order DFS; the resulting order has inputs before users.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::vector<std::shared_ptr<detail::Node>> owners;
  stack.emplace_back(tape.root_.get(), 0);
  visited.insert(tape.root_.get());
  // Parallel owner stack so the order holds shared ownership.
  owners.push_back(tape.root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(child.get(), 0);
        owners.push_back(child);
      }
      continue;
    }
    tape.order_.push_back(std::move(owners.back()));
    owners.pop_back();
    stack.pop_back();
  }
  return tape;
}

void ComputationTape::backward() {
  if (!root_) throw GradientError("backward() on an undefined tensor");
  if (root_->data.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(root_->shape));
  }
  if (!root_->requires_grad) throw GradientError("loss is not connected to any parameter");

  for (const auto& node : order_) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0);
  }
  root_->grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& node = **it;
    if (!node.is_leaf()) node.backward(node);
  }
  for (const auto& node : order_) {
    if (!node->is_leaf()) Buffer().swap(node->grad);
  }
}

void ComputationTape::clear() {
  for (const auto& node : order_) {
    if (!node->is_leaf()) {
      node->backward = nullptr;
      node->inputs.clear();
    }
  }
  order_.clear();
  root_.reset();
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw GradientError("backward() on an undefined tensor");
  if (loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  ComputationTape::record(loss).backward();
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return t_grad_enabled; }

MacCounter::MacCounter() : previous_(t_mac_counter) { t_mac_counter = this; }
MacCounter::~MacCounter() { t_mac_counter = previous_; }
MacCounter* MacCounter::active() { return t_mac_counter; }

}  // namespace nifm
