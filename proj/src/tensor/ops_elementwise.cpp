#include <cmath>
#include <numeric>

#include "egolstm/ops.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

namespace {

// y = f(x) where dy/dx can be written in terms of (x, y).
template <class Forward, class Derivative>
Tensor unary(const char* name, const Tensor& x, Forward fwd, Derivative deriv) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fwd(src[i]);
  });
  if (detail::should_record({&x})) {
    detail::record(name, {x}, out, [x, out, deriv]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xs = x.data<T>();
        auto ys = out.data<T>();
        auto g = out.grad<T>();
        auto gx = x.ensure_grad<T>();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xs[i], ys[i]);
      });
    });
  }
  return out;
}

template <class T>
T stable_sigmoid(T v) {
  if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError(std::string(op) + ": axis out of range");
  return axis;
}

std::int64_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::int64_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](auto v) { return stable_sigmoid(v); }, [](auto, auto y) { return y * (1 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](auto v) { return std::tanh(v); }, [](auto, auto y) { return 1 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](auto v) { return v > 0 ? v : decltype(v){0}; },
      [](auto v, auto) { return v > 0 ? decltype(v){1} : decltype(v){0}; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](auto v) { return static_cast<decltype(v)>(v * factor); },
      [factor](auto v, auto) { return static_cast<decltype(v)>(factor); });
}

namespace {

// Elementwise binary op with per-element partials da, db.
template <class Forward, class PartialA, class PartialB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Forward fwd, PartialA pa, PartialB pb) {
  check_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto av = a.data<T>();
    auto bv = b.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = fwd(av[i], bv[i]);
  });
  if (detail::should_record({&a, &b})) {
    detail::record(name, {a, b}, out, [a, b, out, pa, pb]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto av = a.data<T>();
        auto bv = b.data<T>();
        auto g = out.grad<T>();
        // Two passes so that a and b aliasing the same tensor accumulates twice.
        if (a.requires_grad()) {
          auto ga = a.ensure_grad<T>();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pa(av[i], bv[i]);
        }
        if (b.requires_grad()) {
          auto gb = b.ensure_grad<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pb(av[i], bv[i]);
        }
      });
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](auto x, auto y) { return x + y; }, [](auto x, auto) { return decltype(x){1}; },
      [](auto x, auto) { return decltype(x){1}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](auto x, auto y) { return x - y; }, [](auto x, auto) { return decltype(x){1}; },
      [](auto x, auto) { return decltype(x){-1}; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary(
      "hadamard", a, b, [](auto x, auto y) { return x * y; }, [](auto, auto y) { return y; },
      [](auto x, auto) { return x; });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.dim() != 3 && x.dim() != 4) throw ShapeError("add_channel_bias: input must be [C,H,W] or [N,C,H,W]");
  check_same_dtype(x, bias, "add_channel_bias");
  const std::int64_t channels = x.size(-3);
  if (bias.dim() != 1 || bias.size(0) != channels) {
    throw ShapeError("add_channel_bias: bias " + shape_string(bias.shape()) + " vs " + std::to_string(channels) +
                     " channels");
  }
  const std::int64_t plane = x.size(-1) * x.size(-2);
  const std::int64_t batch = x.numel() / (plane * channels);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto bv = bias.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t c = 0; c < channels; ++c)
        for (std::int64_t i = 0; i < plane; ++i) {
          const auto k = static_cast<std::size_t>((n * channels + c) * plane + i);
          dst[k] = src[k] + bv[static_cast<std::size_t>(c)];
        }
  });
  if (detail::should_record({&x, &bias})) {
    detail::record("add_channel_bias", {x, bias}, out, [x, bias, out, batch, channels, plane]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        if (x.requires_grad()) {
          auto gx = x.ensure_grad<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (bias.requires_grad()) {
          auto gb = bias.ensure_grad<T>();
          for (std::int64_t n = 0; n < batch; ++n)
            for (std::int64_t c = 0; c < channels; ++c)
              for (std::int64_t i = 0; i < plane; ++i)
                gb[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>((n * channels + c) * plane + i)];
        }
      });
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& tensors, std::int64_t axis) {
  if (tensors.empty()) throw ShapeError("concat: no tensors");
  const Tensor& first = tensors.front();
  axis = normalize_axis(axis, first.dim(), "concat");
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<std::int64_t> extents;
  for (const auto& t : tensors) {
    check_same_dtype(first, t, "concat");
    if (t.dim() != first.dim()) throw ShapeError("concat: rank mismatch");
    for (std::int64_t d = 0; d < first.dim(); ++d) {
      if (d != axis && t.size(d) != first.size(d)) {
        throw ShapeError("concat: off-axis extent mismatch " + shape_string(first.shape()) + " vs " +
                         shape_string(t.shape()));
      }
    }
    extents.push_back(t.size(axis));
    out_shape[static_cast<std::size_t>(axis)] += t.size(axis);
  }
  const std::int64_t outer = product(out_shape, 0, static_cast<std::size_t>(axis));
  const std::int64_t inner = product(out_shape, static_cast<std::size_t>(axis) + 1, out_shape.size());
  const std::int64_t total = out_shape[static_cast<std::size_t>(axis)];

  Tensor out = Tensor::zeros(out_shape, first.dtype());
  dispatch(first.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = out.mutable_data<T>();
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      auto src = tensors[k].data<T>();
      const std::int64_t block = extents[k] * inner;
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src.data() + o * block, block, dst.data() + (o * total + offset) * inner);
      }
      offset += extents[k];
    }
  });
  if (detail::should_record(tensors)) {
    detail::record("concat", tensors, out, [tensors, out, extents, outer, inner, total]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < tensors.size(); ++k) {
          const std::int64_t block = extents[k] * inner;
          if (tensors[k].requires_grad()) {
            auto gk = tensors[k].ensure_grad<T>();
            for (std::int64_t o = 0; o < outer; ++o) {
              const T* src = g.data() + (o * total + offset) * inner;
              T* dst = gk.data() + o * block;
              for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          offset += extents[k];
        }
      });
    });
  }
  return out;
}

Tensor stack(const std::vector<Tensor>& tensors, std::int64_t axis) {
  if (tensors.empty()) throw ShapeError("stack: no tensors");
  const auto rank = tensors.front().dim() + 1;
  axis = normalize_axis(axis, rank, "stack");
  std::vector<Tensor> expanded;
  expanded.reserve(tensors.size());
  for (const auto& t : tensors) {
    check_same_shape(tensors.front(), t, "stack");
    Shape s = t.shape();
    s.insert(s.begin() + axis, 1);
    expanded.push_back(reshape(t, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.dim(), "slice");
  const std::int64_t extent = x.size(axis);
  if (start < 0 || length <= 0 || start + length > extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside extent " + std::to_string(extent));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  const std::int64_t outer = product(x.shape(), 0, static_cast<std::size_t>(axis));
  const std::int64_t inner = product(x.shape(), static_cast<std::size_t>(axis) + 1, x.shape().size());
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + (o * extent + start) * inner, length * inner, dst.data() + o * length * inner);
    }
  });
  if (detail::should_record({&x})) {
    detail::record("slice", {x}, out, [x, out, outer, inner, extent, start, length]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        auto gx = x.ensure_grad<T>();
        for (std::int64_t o = 0; o < outer; ++o) {
          const T* src = g.data() + o * length * inner;
          T* dst = gx.data() + (o * extent + start) * inner;
          for (std::int64_t i = 0; i < length * inner; ++i) dst[i] += src[i];
        }
      });
    });
  }
  return out;
}

Tensor select(const Tensor& x, std::int64_t axis, std::int64_t index) {
  axis = normalize_axis(axis, x.dim(), "select");
  Tensor s = slice(x, axis, index, 1);
  Shape shape = x.shape();
  shape.erase(shape.begin() + axis);
  return reshape(s, std::move(shape));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    return Tensor::from_buffer(std::move(shape), std::vector<T>(src.begin(), src.end()));
  });
  if (detail::should_record({&x})) {
    detail::record("reshape", {x}, out, [x, out]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        auto gx = x.ensure_grad<T>();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::int64_t>& order) {
  const auto rank = static_cast<std::size_t>(x.dim());
  if (order.size() != rank) throw ShapeError("permute: order rank mismatch");
  std::vector<bool> seen(rank, false);
  for (auto a : order) {
    if (a < 0 || static_cast<std::size_t>(a) >= rank || seen[static_cast<std::size_t>(a)]) {
      throw ShapeError("permute: order is not a permutation");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
  Shape out_shape(rank);
  std::vector<std::int64_t> gather_strides(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in_shape[static_cast<std::size_t>(order[d])];
    gather_strides[d] = in_strides[static_cast<std::size_t>(order[d])];
  }
  // Flat source offset for every destination element, in destination order.
  auto offsets = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.numel()));
  {
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t src = 0;
    for (auto& off : *offsets) {
      off = src;
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        src += gather_strides[d];
        if (idx[d] < out_shape[d]) break;
        src -= gather_strides[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[static_cast<std::size_t>((*offsets)[i])];
  });
  if (detail::should_record({&x})) {
    detail::record("permute", {x}, out, [x, out, offsets]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        auto gx = x.ensure_grad<T>();
        for (std::size_t i = 0; i < g.size(); ++i) gx[static_cast<std::size_t>((*offsets)[i])] += g[i];
      });
    });
  }
  return out;
}

namespace {

Tensor reduce_all(const char* name, const Tensor& x, double factor) {
  Tensor out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    T acc = std::accumulate(src.begin(), src.end(), T{0});
    return Tensor::from_buffer<T>(Shape{}, {static_cast<T>(acc * factor)});
  });
  if (detail::should_record({&x})) {
    detail::record(name, {x}, out, [x, out, factor]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T g = static_cast<T>(out.grad<T>()[0] * factor);
        auto gx = x.ensure_grad<T>();
        for (auto& v : gx) v += g;
      });
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_all("sum", x, 1.0); }

Tensor mean(const Tensor& x) { return reduce_all("mean", x, 1.0 / static_cast<double>(x.numel())); }

Tensor global_avg_pool(const Tensor& x) {
  if (x.dim() != 3 && x.dim() != 4) throw ShapeError("global_avg_pool: input must be [C,H,W] or [N,C,H,W]");
  const std::int64_t plane = x.size(-1) * x.size(-2);
  const std::int64_t maps = x.numel() / plane;
  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::int64_t m = 0; m < maps; ++m) {
      T acc{0};
      for (std::int64_t i = 0; i < plane; ++i) acc += src[static_cast<std::size_t>(m * plane + i)];
      dst[static_cast<std::size_t>(m)] = acc / static_cast<T>(plane);
    }
  });
  if (detail::should_record({&x})) {
    detail::record("global_avg_pool", {x}, out, [x, out, plane, maps]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        auto gx = x.ensure_grad<T>();
        for (std::int64_t m = 0; m < maps; ++m) {
          const T share = g[static_cast<std::size_t>(m)] / static_cast<T>(plane);
          for (std::int64_t i = 0; i < plane; ++i) gx[static_cast<std::size_t>(m * plane + i)] += share;
        }
      });
    });
  }
  return out;
}

}  // namespace egolstm
