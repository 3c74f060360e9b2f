#include <Eigen/Core>

#include <algorithm>
#include <memory>

#include "egolstm/ops.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t padding,
                                ExtentRule rule) {
  if (stride <= 0) throw ShapeError("convolution stride must be positive");
  if (padding < 0) throw ShapeError("convolution padding must be non-negative");
  const std::int64_t span = in + 2 * padding - kernel;
  if (span < 0) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(in + 2 * padding));
  }
  if (rule == ExtentRule::kExact && span % stride != 0) {
    throw ShapeError("non-exact output extent: (" + std::to_string(in) + " + 2*" + std::to_string(padding) + " - " +
                     std::to_string(kernel) + ") is not divisible by stride " + std::to_string(stride));
  }
  return span / stride + 1;
}

namespace {

// Volumetric convolution geometry. conv2d is the D = kD = 1 case.
struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 0, depth = 1, height = 0, width = 0;
  std::int64_t out_channels = 0, k_depth = 1, k_height = 0, k_width = 0;
  std::int64_t stride = 1, padding = 0;
  std::int64_t out_depth = 1, out_height = 0, out_width = 0;

  std::int64_t in_plane() const { return depth * height * width; }
  std::int64_t out_plane() const { return out_depth * out_height * out_width; }
  std::int64_t patch() const { return in_channels * k_depth * k_height * k_width; }
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Bounds the im2col buffer to ~256K scalars (cache-sized) per chunk of samples.
std::int64_t chunk_samples(const ConvGeometry& g) {
  constexpr std::int64_t kBudget = std::int64_t{1} << 18;
  const std::int64_t per_sample = g.patch() * g.out_plane();
  return std::clamp<std::int64_t>(kBudget / std::max<std::int64_t>(per_sample, 1), 1, g.batch);
}

// Samples [n0, n0+nb) with a zero border of `padding` around each plane, so
// the patch gathers below need no bounds checks. Planes are [depth, ph, pw].
template <class T>
struct PaddedChunk {
  std::int64_t ph = 0, pw = 0;
  const T* data = nullptr;
  std::vector<T> storage;

  std::int64_t plane() const { return ph * pw; }
};

template <class T>
void pad_chunk(const ConvGeometry& g, const T* input, std::int64_t n0, std::int64_t nb, PaddedChunk<T>& out) {
  out.ph = g.height + 2 * g.padding;
  out.pw = g.width + 2 * g.padding;
  const T* src = input + n0 * g.in_channels * g.in_plane();
  if (g.padding == 0) {
    out.data = src;
    return;
  }
  const std::int64_t planes = nb * g.in_channels * g.depth;
  out.storage.assign(static_cast<std::size_t>(planes * out.plane()), T{0});
  for (std::int64_t p = 0; p < planes; ++p) {
    T* dst = out.storage.data() + p * out.plane() + g.padding * out.pw + g.padding;
    for (std::int64_t y = 0; y < g.height; ++y, src += g.width, dst += out.pw) std::copy(src, src + g.width, dst);
  }
  out.data = out.storage.data();
}

// cols[row, (n*out_plane) + o] for the nb samples of a padded chunk.
template <class T>
void im2col(const ConvGeometry& g, const PaddedChunk<T>& in, std::int64_t nb, T* cols) {
  const std::int64_t s = g.stride;
  for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
    for (std::int64_t kd = 0; kd < g.k_depth; ++kd) {
      for (std::int64_t ky = 0; ky < g.k_height; ++ky) {
        for (std::int64_t kx = 0; kx < g.k_width; ++kx) {
          T* dst = cols;
          for (std::int64_t n = 0; n < nb; ++n) {
            const T* src = in.data + ((n * g.in_channels + ci) * g.depth + kd) * in.plane() + ky * in.pw + kx;
            for (std::int64_t od = 0; od < g.out_depth; ++od, src += in.plane()) {
              const T* row = src;
              for (std::int64_t oy = 0; oy < g.out_height; ++oy, row += s * in.pw, dst += g.out_width) {
                if (s == 1) {
                  std::copy(row, row + g.out_width, dst);
                } else {
                  for (std::int64_t ox = 0; ox < g.out_width; ++ox) dst[ox] = row[ox * s];
                }
              }
            }
          }
          cols = dst;
        }
      }
    }
  }
}

// Scatters cols back into a padded gradient chunk (the adjoint of im2col).
template <class T>
void col2im_add(const ConvGeometry& g, const T* cols, std::int64_t nb, std::int64_t ph, std::int64_t pw, T* padded) {
  const std::int64_t s = g.stride;
  const std::int64_t plane = ph * pw;
  for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
    for (std::int64_t kd = 0; kd < g.k_depth; ++kd) {
      for (std::int64_t ky = 0; ky < g.k_height; ++ky) {
        for (std::int64_t kx = 0; kx < g.k_width; ++kx) {
          for (std::int64_t n = 0; n < nb; ++n) {
            T* dst = padded + ((n * g.in_channels + ci) * g.depth + kd) * plane + ky * pw + kx;
            for (std::int64_t od = 0; od < g.out_depth; ++od, dst += plane) {
              T* row = dst;
              for (std::int64_t oy = 0; oy < g.out_height; ++oy, row += s * pw, cols += g.out_width) {
                for (std::int64_t ox = 0; ox < g.out_width; ++ox) row[ox * s] += cols[ox];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::int64_t chunk = chunk_samples(g);
  const std::int64_t plane = g.out_plane();
  PaddedChunk<T> padded;
  std::vector<T> cols;
  RowMat<T> result;
  ConstMapMat<T> w(weight, g.out_channels, g.patch());
  for (std::int64_t n0 = 0; n0 < g.batch; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, g.batch - n0);
    pad_chunk(g, input, n0, nb, padded);
    cols.resize(static_cast<std::size_t>(g.patch() * nb * plane));
    im2col(g, padded, nb, cols.data());
    ConstMapMat<T> c(cols.data(), g.patch(), nb * plane);
    result.noalias() = w * c;
    for (std::int64_t n = 0; n < nb; ++n) {
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        const T b = bias ? bias[co] : T{0};
        const T* src = result.data() + co * nb * plane + n * plane;
        T* dst = output + ((n0 + n) * g.out_channels + co) * plane;
        for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
      }
    }
  }
}

template <class T>
void conv_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_out, T* grad_input,
                   T* grad_weight, T* grad_bias) {
  const std::int64_t chunk = chunk_samples(g);
  const std::int64_t plane = g.out_plane();
  PaddedChunk<T> padded;
  std::vector<T> cols;
  std::vector<T> dpadded;
  RowMat<T> gmat;
  RowMat<T> dcols;
  ConstMapMat<T> w(weight, g.out_channels, g.patch());
  for (std::int64_t n0 = 0; n0 < g.batch; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, g.batch - n0);
    gmat.resize(g.out_channels, nb * plane);
    for (std::int64_t n = 0; n < nb; ++n) {
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        const T* src = grad_out + ((n0 + n) * g.out_channels + co) * plane;
        std::copy(src, src + plane, gmat.data() + co * nb * plane + n * plane);
      }
    }
    if (grad_bias) {
      for (std::int64_t co = 0; co < g.out_channels; ++co) grad_bias[co] += gmat.row(co).sum();
    }
    if (grad_weight) {
      pad_chunk(g, input, n0, nb, padded);
      cols.resize(static_cast<std::size_t>(g.patch() * nb * plane));
      im2col(g, padded, nb, cols.data());
      ConstMapMat<T> c(cols.data(), g.patch(), nb * plane);
      MapMat<T> dw(grad_weight, g.out_channels, g.patch());
      dw.noalias() += gmat * c.transpose();
    }
    if (grad_input) {
      dcols.noalias() = w.transpose() * gmat;
      const std::int64_t ph = g.height + 2 * g.padding;
      const std::int64_t pw = g.width + 2 * g.padding;
      const std::int64_t planes = nb * g.in_channels * g.depth;
      dpadded.assign(static_cast<std::size_t>(planes * ph * pw), T{0});
      col2im_add(g, dcols.data(), nb, ph, pw, dpadded.data());
      T* dst = grad_input + n0 * g.in_channels * g.in_plane();
      for (std::int64_t p = 0; p < planes; ++p) {
        const T* src = dpadded.data() + p * ph * pw + g.padding * pw + g.padding;
        for (std::int64_t y = 0; y < g.height; ++y, src += pw, dst += g.width) {
          for (std::int64_t x = 0; x < g.width; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

Tensor run_conv(const char* name, const ConvGeometry& g, const Tensor& input, const Tensor& weight,
                const Tensor& bias, Shape out_shape) {
  Tensor out = Tensor::zeros(std::move(out_shape), input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    conv_forward<T>(g, input.data<T>().data(), weight.data<T>().data(),
                    bias.defined() ? bias.data<T>().data() : nullptr, out.mutable_data<T>().data());
  });
  if (detail::should_record({&input, &weight, &bias})) {
    detail::record(name, {input, weight, bias}, out, [g, input, weight, bias, out]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* gi = input.requires_grad() ? input.ensure_grad<T>().data() : nullptr;
        T* gw = weight.requires_grad() ? weight.ensure_grad<T>().data() : nullptr;
        T* gb = (bias.defined() && bias.requires_grad()) ? bias.ensure_grad<T>().data() : nullptr;
        conv_backward<T>(g, input.data<T>().data(), weight.data<T>().data(), out.grad<T>().data(), gi, gw, gb);
      });
    });
  }
  return out;
}

void check_conv_operands(const char* op, const Tensor& input, const Tensor& weight, const Tensor& bias,
                         std::int64_t in_channels) {
  check_same_dtype(input, weight, op);
  if (weight.size(1) != in_channels) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(in_channels) + " channels, kernel expects " +
                     std::to_string(weight.size(1)));
  }
  if (bias.defined()) {
    check_same_dtype(input, bias, op);
    if (bias.dim() != 1 || bias.size(0) != weight.size(0)) {
      throw ShapeError(std::string(op) + ": bias shape " + shape_string(bias.shape()) + " does not match " +
                       std::to_string(weight.size(0)) + " output channels");
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
  if (input.dim() != 3 && input.dim() != 4) {
    throw ShapeError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_string(input.shape()));
  }
  if (weight.dim() != 4) throw ShapeError("conv2d: kernel must be [C_out,C_in,kH,kW]");
  const bool batched = input.dim() == 4;
  ConvGeometry g;
  g.batch = batched ? input.size(0) : 1;
  g.in_channels = input.size(-3);
  g.height = input.size(-2);
  g.width = input.size(-1);
  check_conv_operands("conv2d", input, weight, bias, g.in_channels);
  g.out_channels = weight.size(0);
  g.k_height = weight.size(2);
  g.k_width = weight.size(3);
  g.stride = options.stride;
  g.padding = options.padding;
  g.out_height = conv_output_extent(g.height, g.k_height, g.stride, g.padding, options.rule);
  g.out_width = conv_output_extent(g.width, g.k_width, g.stride, g.padding, options.rule);
  Shape out_shape = batched ? Shape{g.batch, g.out_channels, g.out_height, g.out_width}
                            : Shape{g.out_channels, g.out_height, g.out_width};
  return run_conv("conv2d", g, input, weight, bias, std::move(out_shape));
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::int64_t spatial_padding) {
  if (input.dim() != 4 && input.dim() != 5) {
    throw ShapeError("conv3d: input must be [C,D,H,W] or [N,C,D,H,W], got " + shape_string(input.shape()));
  }
  if (weight.dim() != 5) throw ShapeError("conv3d: kernel must be [C_out,C_in,kD,kH,kW]");
  const bool batched = input.dim() == 5;
  ConvGeometry g;
  g.batch = batched ? input.size(0) : 1;
  g.in_channels = input.size(-4);
  g.depth = input.size(-3);
  g.height = input.size(-2);
  g.width = input.size(-1);
  check_conv_operands("conv3d", input, weight, bias, g.in_channels);
  g.out_channels = weight.size(0);
  g.k_depth = weight.size(2);
  g.k_height = weight.size(3);
  g.k_width = weight.size(4);
  g.padding = spatial_padding;
  g.out_depth = conv_output_extent(g.depth, g.k_depth, 1, 0, ExtentRule::kExact);
  g.out_height = conv_output_extent(g.height, g.k_height, 1, g.padding, ExtentRule::kExact);
  g.out_width = conv_output_extent(g.width, g.k_width, 1, g.padding, ExtentRule::kExact);
  Shape out_shape = batched ? Shape{g.batch, g.out_channels, g.out_depth, g.out_height, g.out_width}
                            : Shape{g.out_channels, g.out_depth, g.out_height, g.out_width};
  return run_conv("conv3d", g, input, weight, bias, std::move(out_shape));
}

}  // namespace egolstm
