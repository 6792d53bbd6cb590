#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "nifm/error.hpp"
#include "nifm/tensor.hpp"

namespace nifm {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

bool needs_graph(std::initializer_list<const Tensor*> inputs) {
  if (!NoGradGuard::grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_value(Shape shape, Buffer data, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  return Tensor::from_node(std::move(node));
}

Tensor make_op(Shape shape, Buffer data, const char* op, std::vector<NodePtr> inputs,
               std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->requires_grad = true;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  return Tensor::from_node(std::move(node));
}

// Builds a unary elementwise op. `grad_of(x, y)` returns dy/dx.
template <typename Forward, typename Grad>
Tensor unary(const Tensor& x, const char* name, Forward forward, Grad grad_of) {
  const auto in = x.data();
  Buffer out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), forward);
  if (!needs_graph({&x})) return make_value(x.shape(), std::move(out), name);
  return make_op(x.shape(), std::move(out), name, {x.node()}, [grad_of](Node& self) {
    Node& a = *self.inputs[0];
    auto& g = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * grad_of(a.data[i], self.data[i]);
  });
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

// Index mapping for broadcasting binary ops and reductions: walks `out` in
// row-major order and yields the matching flat offsets in a and b.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;

  template <typename Fn>
  void for_each(Fn fn) const {
    const std::size_t rank = out.size();
    const std::size_t total = shape_numel(out);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < total; ++i) {
      fn(i, ia, ib);
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        ia += a_stride[ax];
        ib += b_stride[ax];
        if (idx[ax] < out[ax]) break;
        ia -= a_stride[ax] * out[ax];
        ib -= b_stride[ax] * out[ax];
        idx[ax] = 0;
      }
    }
  }
};

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size());
  std::size_t acc = 1;
  for (std::size_t ax = shape.size(); ax-- > 0;) {
    s[ax] = shape[ax] == 1 ? 0 : acc;
    acc *= shape[ax];
  }
  return s;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (shape_numel(a) == 1 && a.size() <= b.size() && shape_numel(b) >= 1) {
    bc.out = b;
    bc.a_stride.assign(b.size(), 0);
    bc.b_stride = strides_of(b);
    return bc;
  }
  if (shape_numel(b) == 1 && b.size() <= a.size()) {
    bc.out = a;
    bc.a_stride = strides_of(a);
    bc.b_stride.assign(a.size(), 0);
    return bc;
  }
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  bc.out.resize(a.size());
  for (std::size_t ax = 0; ax < a.size(); ++ax) {
    if (a[ax] != b[ax] && a[ax] != 1 && b[ax] != 1) {
      throw DimensionError(std::string(op) + ": axis " + std::to_string(ax) + " extents " +
                               std::to_string(a[ax]) + " and " + std::to_string(b[ax]) +
                               " are not broadcast-compatible",
                           static_cast<int>(ax));
    }
    bc.out[ax] = std::max(a[ax], b[ax]);
  }
  bc.a_stride = strides_of(a);
  bc.b_stride = strides_of(b);
  return bc;
}

enum class BinaryKind { Add, Sub, Mul, Div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  const bool same = a.shape() == b.shape();
  const Broadcast bc = same ? Broadcast{} : broadcast_shapes(a.shape(), b.shape(), name);
  const Shape out_shape = same ? a.shape() : bc.out;
  const auto x = a.data();
  const auto y = b.data();
  Buffer out(shape_numel(out_shape));
  auto apply = [kind](double u, double v) {
    switch (kind) {
      case BinaryKind::Add: return u + v;
      case BinaryKind::Sub: return u - v;
      case BinaryKind::Mul: return u * v;
      case BinaryKind::Div: return u / v;
    }
    return 0.0;
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(x[i], y[i]);
  } else {
    bc.for_each([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = apply(x[ia], y[ib]); });
  }
  if (!needs_graph({&a, &b})) return make_value(out_shape, std::move(out), name);

  return make_op(out_shape, std::move(out), name, {a.node(), b.node()}, [kind, same, bc](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    Buffer* ga = na.requires_grad ? &na.grad_buffer() : nullptr;
    Buffer* gb = nb.requires_grad ? &nb.grad_buffer() : nullptr;
    auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const double g = self.grad[i];
      switch (kind) {
        case BinaryKind::Add:
          if (ga) (*ga)[ia] += g;
          if (gb) (*gb)[ib] += g;
          break;
        case BinaryKind::Sub:
          if (ga) (*ga)[ia] += g;
          if (gb) (*gb)[ib] -= g;
          break;
        case BinaryKind::Mul:
          if (ga) (*ga)[ia] += g * nb.data[ib];
          if (gb) (*gb)[ib] += g * na.data[ia];
          break;
        case BinaryKind::Div: {
          const double v = nb.data[ib];
          if (ga) (*ga)[ia] += g / v;
          if (gb) (*gb)[ib] -= g * na.data[ia] / (v * v);
          break;
        }
      }
    };
    if (same) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) step(i, i, i);
    } else {
      bc.for_each(step);
    }
  });
}

void im2col(const double* x, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w,
            double* col) {
  const std::size_t plane = out_h * out_w;
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x + c * height * width;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* dst = col + ((c * kh + i) * kw + j) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
          double* row = dst + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + out_w, 0.0);
            continue;
          }
          const double* src = xc + iy * w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            row[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w,
                double* dx) {
  const std::size_t plane = out_h * out_w;
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    double* dxc = dx + c * height * width;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const double* src = col + ((c * kh + i) * kw + j) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= h) continue;
          double* dst = dxc + iy * w;
          const double* row = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

std::vector<std::size_t> normalized_axes(const std::vector<std::size_t>& axes, std::size_t rank) {
  std::vector<std::size_t> out = axes;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (auto ax : out) {
    if (ax >= rank) {
      throw DimensionError("reduction axis " + std::to_string(ax) + " out of range for rank " + std::to_string(rank),
                           static_cast<int>(ax));
    }
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride == 0) throw DomainError("conv2d stride must be positive");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1), height = input.dim(2), width = input.dim(3);
  const std::size_t n_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != channels) {
    throw DimensionError("conv2d: input has " + std::to_string(channels) + " channels but kernel expects " +
                             std::to_string(kernel.dim(1)),
                         1);
  }
  if (kh > height + 2 * padding) throw DimensionError("conv2d: kernel height exceeds padded input height", 2);
  if (kw > width + 2 * padding) throw DimensionError("conv2d: kernel width exceeds padded input width", 3);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n_out)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(n_out) + " output channels",
                         0);
  }

  const std::size_t out_h = (height + 2 * padding - kh) / stride + 1;
  const std::size_t out_w = (width + 2 * padding - kw) / stride + 1;
  const std::size_t plane = out_h * out_w;
  const std::size_t patch = channels * kh * kw;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
  const bool graph = needs_graph({&input, &kernel, &bias});
  const bool keep_cols = graph && kernel.requires_grad() && !pointwise;

  if (auto* counter = MacCounter::active()) counter->add(n_batch * n_out * patch * plane);

  const double* x = input.data().data();
  ConstMatMap weight(kernel.data().data(), n_out, patch);
  Buffer cols(keep_cols ? n_batch * patch * plane : (pointwise ? 0 : patch * plane));
  Buffer out(n_batch * n_out * plane);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const double* col = x + n * channels * height * width;
    if (!pointwise) {
      double* dst = cols.data() + (keep_cols ? n * patch * plane : 0);
      im2col(col, channels, height, width, kh, kw, stride, padding, out_h, out_w, dst);
      col = dst;
    }
    MatMap result(out.data() + n * n_out * plane, n_out, plane);
    result.noalias() = weight * ConstMatMap(col, patch, plane);
    if (bias.defined()) {
      const auto b = bias.data();
      for (std::size_t k = 0; k < n_out; ++k) result.row(k).array() += b[k];
    }
  }

  Shape out_shape{n_batch, n_out, out_h, out_w};
  if (!graph) return make_value(std::move(out_shape), std::move(out), "conv2d");

  std::vector<NodePtr> inputs{input.node(), kernel.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  if (!keep_cols) cols.clear();
  return make_op(std::move(out_shape), std::move(out), "conv2d", std::move(inputs),
                 [=, cols = std::move(cols)](Node& self) {
                   Node& in = *self.inputs[0];
                   Node& ker = *self.inputs[1];
                   Node* b = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
                   ConstMatMap w(ker.data.data(), n_out, patch);
                   RowMat dcol;
                   for (std::size_t n = 0; n < n_batch; ++n) {
                     ConstMatMap dy(self.grad.data() + n * n_out * plane, n_out, plane);
                     if (ker.requires_grad) {
                       const double* col = pointwise ? in.data.data() + n * channels * height * width
                                                     : cols.data() + n * patch * plane;
                       MatMap dw(ker.grad_buffer().data(), n_out, patch);
                       dw.noalias() += dy * ConstMatMap(col, patch, plane).transpose();
                     }
                     if (b && b->requires_grad) {
                       auto& db = b->grad_buffer();
                       for (std::size_t k = 0; k < n_out; ++k) db[k] += dy.row(k).sum();
                     }
                     if (in.requires_grad) {
                       double* dx = in.grad_buffer().data() + n * channels * height * width;
                       if (pointwise) {
                         MatMap(dx, channels, plane).noalias() += w.transpose() * dy;
                       } else {
                         dcol.noalias() = w.transpose() * dy;
                         col2im_add(dcol.data(), channels, height, width, kh, kw, stride, padding, out_h, out_w,
                                    dx);
                       }
                     }
                   }
                 });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t rows = input.dim(0), in_dim = input.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in_dim) {
    throw DimensionError("linear: input width " + std::to_string(in_dim) + " does not match weight width " +
                             std::to_string(weight.dim(1)),
                         1);
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(out_dim) + " outputs",
                         0);
  }
  if (auto* counter = MacCounter::active()) counter->add(rows * out_dim * in_dim);

  Buffer out(rows * out_dim);
  MatMap y(out.data(), rows, out_dim);
  y.noalias() = ConstMatMap(input.data().data(), rows, in_dim) *
                ConstMatMap(weight.data().data(), out_dim, in_dim).transpose();
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_dim; ++o) y(r, o) += b[o];
    }
  }
  Shape out_shape{rows, out_dim};
  if (!needs_graph({&input, &weight, &bias})) return make_value(std::move(out_shape), std::move(out), "linear");

  std::vector<NodePtr> inputs{input.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_op(std::move(out_shape), std::move(out), "linear", std::move(inputs), [=](Node& self) {
    Node& x = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node* b = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    ConstMatMap dy(self.grad.data(), rows, out_dim);
    if (x.requires_grad) {
      MatMap(x.grad_buffer().data(), rows, in_dim).noalias() += dy * ConstMatMap(w.data.data(), out_dim, in_dim);
    }
    if (w.requires_grad) {
      MatMap(w.grad_buffer().data(), out_dim, in_dim).noalias() +=
          dy.transpose() * ConstMatMap(x.data.data(), rows, in_dim);
    }
    if (b && b->requires_grad) {
      auto& db = b->grad_buffer();
      for (std::size_t o = 0; o < out_dim; ++o) db[o] += dy.col(o).sum();
    }
  });
}

Tensor global_average_pool(const Tensor& input) {
  require_rank(input, 4, "global_average_pool input");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (plane == 0) throw DimensionError("global_average_pool: empty spatial extent", 2);
  const auto x = input.data();
  Buffer out(n_batch * channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += x[i * plane + p];
    out[i] = acc / static_cast<double>(plane);
  }
  Shape out_shape{n_batch, channels};
  if (!needs_graph({&input})) return make_value(std::move(out_shape), std::move(out), "gap");
  return make_op(std::move(out_shape), std::move(out), "gap", {input.node()}, [plane](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double scale = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = self.grad[i] * scale;
      for (std::size_t p = 0; p < plane; ++p) g[i * plane + p] += v;
    }
  });
}

Tensor channel_scale(const Tensor& features, const Tensor& weights) {
  require_rank(features, 4, "channel_scale features");
  require_rank(weights, 2, "channel_scale weights");
  if (weights.dim(0) != features.dim(0)) {
    throw DimensionError("channel_scale: batch " + std::to_string(features.dim(0)) + " vs weight rows " +
                             std::to_string(weights.dim(0)),
                         0);
  }
  if (weights.dim(1) != features.dim(1)) {
    throw DimensionError("channel_scale: " + std::to_string(features.dim(1)) + " feature channels vs " +
                             std::to_string(weights.dim(1)) + " weights",
                         1);
  }
  const std::size_t groups = weights.numel();
  const std::size_t plane = features.dim(2) * features.dim(3);
  const auto f = features.data();
  const auto w = weights.data();
  Buffer out(f.size());
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    for (std::size_t p = 0; p < plane; ++p) out[gidx * plane + p] = w[gidx] * f[gidx * plane + p];
  }
  if (!needs_graph({&features, &weights})) return make_value(features.shape(), std::move(out), "channel_scale");
  return make_op(features.shape(), std::move(out), "channel_scale", {features.node(), weights.node()},
                 [groups, plane](Node& self) {
                   Node& nf = *self.inputs[0];
                   Node& nw = *self.inputs[1];
                   for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                     const double* dy = self.grad.data() + gidx * plane;
                     if (nf.requires_grad) {
                       double* df = nf.grad_buffer().data() + gidx * plane;
                       const double wv = nw.data[gidx];
                       for (std::size_t p = 0; p < plane; ++p) df[p] += wv * dy[p];
                     }
                     if (nw.requires_grad) {
                       const double* fv = nf.data.data() + gidx * plane;
                       double acc = 0.0;
                       for (std::size_t p = 0; p < plane; ++p) acc += fv[p] * dy[p];
                       nw.grad_buffer()[gidx] += acc;
                     }
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first),
                         static_cast<int>(axis));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(first));
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      if (ax != axis && s[ax] != first[ax]) {
        throw DimensionError("concat: axis " + std::to_string(ax) + " differs (" + shape_str(s) + " vs " +
                                 shape_str(first) + ")",
                             static_cast<int>(ax));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
  for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];
  const std::size_t out_row = out_shape[axis] * inner;

  Buffer out(shape_numel(out_shape));
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis) * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * len, len, out.begin() + o * out_row + offset);
    }
    extents.push_back(len);
    offset += len;
  }

  bool graph = false;
  for (const auto& p : parts) graph = graph || needs_graph({&p});
  if (!graph) return make_value(std::move(out_shape), std::move(out), "concat");

  std::vector<NodePtr> inputs;
  for (const auto& p : parts) inputs.push_back(p.node());
  return make_op(std::move(out_shape), std::move(out), "concat", std::move(inputs),
                 [outer, out_row, extents](Node& self) {
                   std::size_t offset = 0;
                   for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                     Node& in = *self.inputs[k];
                     const std::size_t len = extents[k];
                     if (in.requires_grad) {
                       auto& g = in.grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < len; ++i) g[o * len + i] += self.grad[o * out_row + offset + i];
                       }
                     }
                     offset += len;
                   }
                 });
}

Tensor max_pool2(const Tensor& input) {
  require_rank(input, 4, "max_pool2 input");
  const std::size_t height = input.dim(2), width = input.dim(3);
  if (height % 2 != 0) throw DimensionError("max_pool2: odd height " + std::to_string(height), 2);
  if (width % 2 != 0) throw DimensionError("max_pool2: odd width " + std::to_string(width), 3);
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t out_h = height / 2, out_w = width / 2;
  const auto x = input.data();
  Buffer out(planes * out_h * out_w);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * height * width;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t top = base + (2 * oy) * width + 2 * ox;
        const std::size_t cells[4] = {top, top + 1, top + width, top + width + 1};
        std::size_t best = cells[0];
        for (std::size_t c = 1; c < 4; ++c) {
          if (x[cells[c]] > x[best]) best = cells[c];
        }
        const std::size_t o = (p * out_h + oy) * out_w + ox;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  Shape out_shape{input.dim(0), input.dim(1), out_h, out_w};
  if (!needs_graph({&input})) return make_value(std::move(out_shape), std::move(out), "max_pool2");
  return make_op(std::move(out_shape), std::move(out), "max_pool2", {input.node()},
                 [argmax = std::move(argmax)](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                 });
}

Tensor upsample_nearest2(const Tensor& input) {
  require_rank(input, 4, "upsample_nearest2 input");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t height = input.dim(2), width = input.dim(3);
  const std::size_t out_w = 2 * width;
  const auto x = input.data();
  Buffer out(planes * 4 * height * width);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * height; ++y) {
      const double* src = x.data() + (p * height + y / 2) * width;
      double* dst = out.data() + (p * 2 * height + y) * out_w;
      for (std::size_t xo = 0; xo < out_w; ++xo) dst[xo] = src[xo / 2];
    }
  }
  Shape out_shape{input.dim(0), input.dim(1), 2 * height, out_w};
  if (!needs_graph({&input})) return make_value(std::move(out_shape), std::move(out), "upsample_nearest2");
  return make_op(std::move(out_shape), std::move(out), "upsample_nearest2", {input.node()},
                 [planes, height, width, out_w](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t p = 0; p < planes; ++p) {
                     for (std::size_t y = 0; y < 2 * height; ++y) {
                       double* dst = g.data() + (p * height + y / 2) * width;
                       const double* src = self.grad.data() + (p * 2 * height + y) * out_w;
                       for (std::size_t xo = 0; xo < out_w; ++xo) dst[xo / 2] += src[xo];
                     }
                   }
                 });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(v));
  }
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lower bound exceeds upper bound");
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Div, "div"); }

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double value) {
  return unary(
      x, "mul_scalar", [value](double v) { return v * value; }, [value](double, double) { return value; });
}

Tensor rsub_scalar(double value, const Tensor& x) {
  return unary(
      x, "rsub_scalar", [value](double v) { return value - v; }, [](double, double) { return -1.0; });
}

Tensor reduce(const Tensor& x, Reduction kind, const std::vector<std::size_t>& axes) {
  const auto reduced = normalized_axes(axes, x.rank());
  Shape out_shape = x.shape();
  std::size_t count = 1;
  for (auto ax : reduced) {
    count *= out_shape[ax];
    out_shape[ax] = 1;
  }
  if (count == 0) throw DimensionError("reduce over an empty extent");

  Broadcast walk;
  walk.out = x.shape();
  walk.a_stride = strides_of(x.shape());
  walk.b_stride = strides_of(out_shape);
  // strides_of() zeroes extent-1 axes of the input too; restore them so the
  // input offset stays a plain row-major index.
  {
    std::size_t acc = 1;
    for (std::size_t ax = x.rank(); ax-- > 0;) {
      walk.a_stride[ax] = acc;
      acc *= x.shape()[ax];
    }
  }

  const auto in = x.data();
  const double inv = 1.0 / static_cast<double>(count);
  Buffer sums(shape_numel(out_shape), 0.0);
  walk.for_each([&](std::size_t, std::size_t ia, std::size_t ib) { sums[ib] += in[ia]; });

  Buffer out = sums;
  Buffer means;
  if (kind != Reduction::Sum) {
    for (auto& v : out) v *= inv;
  }
  if (kind == Reduction::Var) {
    means = out;
    std::fill(out.begin(), out.end(), 0.0);
    walk.for_each([&](std::size_t, std::size_t ia, std::size_t ib) {
      const double d = in[ia] - means[ib];
      out[ib] += d * d;
    });
    for (auto& v : out) v *= inv;
  }

  static constexpr const char* names[] = {"sum", "mean", "var"};
  const char* name = names[static_cast<int>(kind)];
  if (!needs_graph({&x})) return make_value(std::move(out_shape), std::move(out), name);
  return make_op(std::move(out_shape), std::move(out), name, {x.node()},
                 [kind, walk, inv, means = std::move(means)](Node& self) {
                   Node& a = *self.inputs[0];
                   auto& g = a.grad_buffer();
                   walk.for_each([&](std::size_t, std::size_t ia, std::size_t ib) {
                     switch (kind) {
                       case Reduction::Sum: g[ia] += self.grad[ib]; break;
                       case Reduction::Mean: g[ia] += self.grad[ib] * inv; break;
                       case Reduction::Var: g[ia] += self.grad[ib] * 2.0 * (a.data[ia] - means[ib]) * inv; break;
                     }
                   });
                 });
}

Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes) { return reduce(x, Reduction::Sum, axes); }
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes) { return reduce(x, Reduction::Mean, axes); }
Tensor var(const Tensor& x, const std::vector<std::size_t>& axes) { return reduce(x, Reduction::Var, axes); }

static std::vector<std::size_t> all_axes(const Tensor& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

Tensor sum_all(const Tensor& x) { return reshape(sum(x, all_axes(x)), {}); }
Tensor mean_all(const Tensor& x) { return reshape(mean(x, all_axes(x)), {}); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) + " changes element count");
  }
  Buffer out(x.data().begin(), x.data().end());
  if (!needs_graph({&x})) return make_value(std::move(shape), std::move(out), "reshape");
  return make_op(std::move(shape), std::move(out), "reshape", {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace nifm
