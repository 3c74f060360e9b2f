#include <cmath>
#include <memory>

#include "egolstm/ops.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

Tensor max_pool2d(const Tensor& input, std::int64_t window, std::int64_t stride) {
  if (input.dim() < 2) throw ShapeError("max_pool2d: input needs at least two spatial axes");
  if (window <= 0 || stride <= 0) throw ShapeError("max_pool2d: window and stride must be positive");
  const std::int64_t h = input.size(-2);
  const std::int64_t w = input.size(-1);
  if (window > h || window > w) {
    throw ShapeError("max_pool2d: window " + std::to_string(window) + " larger than input " +
                     shape_string(input.shape()));
  }
  const std::int64_t oh = (h - window) / stride + 1;
  const std::int64_t ow = (w - window) / stride + 1;
  const std::int64_t planes = input.numel() / (h * w);
  Shape out_shape = input.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;

  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(planes * oh * ow));
  Tensor out = Tensor::zeros(out_shape, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = input.data<T>();
    auto dst = out.mutable_data<T>();
    std::size_t o = 0;
    for (std::int64_t p = 0; p < planes; ++p) {
      const std::int64_t base = p * h * w;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox, ++o) {
          std::int64_t best = base + oy * stride * w + ox * stride;
          for (std::int64_t ky = 0; ky < window; ++ky) {
            for (std::int64_t kx = 0; kx < window; ++kx) {
              const std::int64_t k = base + (oy * stride + ky) * w + ox * stride + kx;
              // Strict comparison keeps the first maximum.
              if (src[static_cast<std::size_t>(k)] > src[static_cast<std::size_t>(best)]) best = k;
            }
          }
          (*argmax)[o] = best;
          dst[o] = src[static_cast<std::size_t>(best)];
        }
      }
    }
  });
  if (detail::should_record({&input})) {
    detail::record("max_pool2d", {input}, out, [input, out, argmax]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        auto gi = input.ensure_grad<T>();
        for (std::size_t o = 0; o < g.size(); ++o) gi[static_cast<std::size_t>((*argmax)[o])] += g[o];
      });
    });
  }
  return out;
}

Tensor lrn(const Tensor& input, const LrnOptions& options) {
  if (options.size < 1) throw std::invalid_argument("lrn: size must be >= 1");
  if (!(options.k > 0)) throw std::invalid_argument("lrn: k must be positive");
  if (input.dim() != 3 && input.dim() != 4) throw ShapeError("lrn: input must be [C,H,W] or [N,C,H,W]");
  const std::int64_t channels = input.size(-3);
  const std::int64_t plane = input.size(-1) * input.size(-2);
  const std::int64_t batch = input.numel() / (channels * plane);
  const std::int64_t lo = (options.size - 1) / 2;
  const std::int64_t hi = options.size - 1 - lo;
  const double alpha_n = options.alpha / static_cast<double>(options.size);

  // Denominator base D = k + alpha/n * sum of squares, kept for backward.
  auto denom = std::make_shared<std::vector<double>>(static_cast<std::size_t>(input.numel()));
  Tensor out = Tensor::zeros(input.shape(), input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = input.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::int64_t n = 0; n < batch; ++n) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const std::int64_t c0 = std::max<std::int64_t>(0, c - lo);
        const std::int64_t c1 = std::min<std::int64_t>(channels - 1, c + hi);
        for (std::int64_t i = 0; i < plane; ++i) {
          double sq = 0.0;
          for (std::int64_t cc = c0; cc <= c1; ++cc) {
            const double v = src[static_cast<std::size_t>((n * channels + cc) * plane + i)];
            sq += v * v;
          }
          const auto k = static_cast<std::size_t>((n * channels + c) * plane + i);
          const double d = options.k + alpha_n * sq;
          (*denom)[k] = d;
          dst[k] = static_cast<T>(src[k] * std::pow(d, -options.beta));
        }
      }
    }
  });
  if (detail::should_record({&input})) {
    detail::record("lrn", {input}, out, [input, out, denom, options, batch, channels, plane, lo, hi, alpha_n]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = input.data<T>();
        auto g = out.grad<T>();
        auto gx = input.ensure_grad<T>();
        const double beta = options.beta;
        for (std::int64_t n = 0; n < batch; ++n) {
          for (std::int64_t j = 0; j < channels; ++j) {
            // Channels c whose window contains j.
            const std::int64_t c0 = std::max<std::int64_t>(0, j - hi);
            const std::int64_t c1 = std::min<std::int64_t>(channels - 1, j + lo);
            for (std::int64_t i = 0; i < plane; ++i) {
              const auto kj = static_cast<std::size_t>((n * channels + j) * plane + i);
              double acc = g[kj] * std::pow((*denom)[kj], -beta);
              double cross = 0.0;
              for (std::int64_t c = c0; c <= c1; ++c) {
                const auto kc = static_cast<std::size_t>((n * channels + c) * plane + i);
                cross += g[kc] * x[kc] * std::pow((*denom)[kc], -beta - 1.0);
              }
              acc -= 2.0 * alpha_n * beta * x[kj] * cross;
              gx[kj] += static_cast<T>(acc);
            }
          }
        }
      });
    });
  }
  return out;
}

}  // namespace egolstm
