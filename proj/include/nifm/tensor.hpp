#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace nifm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Cache-line aligned storage. Vectorized kernels pick their code path from the
// buffer address, so a fixed alignment keeps results bitwise reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {

// One value in the define-by-run graph. Interior nodes carry the closure that
// pushes their gradient to their inputs; leaves have no closure.
struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  // Returns the gradient buffer, allocating a zero-filled one on first use.
  Buffer& grad_buffer();
};

}  // namespace detail

// Dense row-major f64 tensor with reverse-mode autodiff. Copies share the
// underlying node (handle semantics); use detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of a leaf's values, used by optimizers. Must not be called
  // while a graph that consumed this tensor is still going to be replayed.
  std::span<double> mutable_data();
  double operator[](std::size_t flat) const { return data()[flat]; }
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  // Forgets the gradient so that has_grad() is false until the next backward.
  void clear_grad();

  // Fresh leaf holding a copy of the values, cut from the graph.
  Tensor detach() const;
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Topologically ordered record of the graph reachable from a root. Replaying
// it in reverse visits each node once.
class ComputationTape {
 public:
  static ComputationTape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<std::shared_ptr<detail::Node>>& order() const { return order_; }

  // Seeds d(root)/d(root) = 1 and propagates to every requires_grad leaf.
  void backward();
  // Drops the backward closures (and the forward caches they hold) of every
  // interior node, then forgets the nodes.
  void clear();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> order_;
};

void backward(const Tensor& loss);

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

// Accumulates multiply-accumulate counts of conv2d and linear calls made on
// this thread while alive.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t macs() const { return macs_; }
  void add(std::uint64_t n) { macs_ += n; }
  static MacCounter* active();

 private:
  std::uint64_t macs_ = 0;
  MacCounter* previous_;
};

// ---- primitives -----------------------------------------------------------

// Cross-correlation. input [N,C,H,W], kernel [K,C,kh,kw], bias [K] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);

// input [N,D], weight [O,D], bias [O] or undefined.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor global_average_pool(const Tensor& input);

// out[n,c,h,w] = weights[n,c] * features[n,c,h,w]
Tensor channel_scale(const Tensor& features, const Tensor& weights);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// 2x2 max pooling, stride 2. Gradient goes to the first maximum in
// row-major window order.
Tensor max_pool2(const Tensor& input);
Tensor upsample_nearest2(const Tensor& input);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Throws DomainError on any nonpositive element.
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// Binary ops broadcast over axes where one side has extent 1. Ranks must
// match unless one operand has a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double value);
Tensor mul_scalar(const Tensor& x, double value);
// value - x
Tensor rsub_scalar(double value, const Tensor& x);

enum class Reduction { Sum, Mean, Var };

// Reduces over the listed axes, keeping them with extent 1. Var is the
// population variance.
Tensor reduce(const Tensor& x, Reduction kind, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor var(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add_scalar(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul_scalar(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul_scalar(b, a); }
inline Tensor operator-(double a, const Tensor& b) { return rsub_scalar(a, b); }
inline Tensor operator+(double a, const Tensor& b) { return add_scalar(b, a); }
inline Tensor operator-(const Tensor& a, double b) { return add_scalar(a, -b); }
inline Tensor operator/(const Tensor& a, double b) { return mul_scalar(a, 1.0 / b); }

}  // namespace nifm
