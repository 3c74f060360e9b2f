#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "egolstm/tensor.hpp"

// Differentiable operators. Every op records itself on the active Tape when
// at least one input requires grad. Spatial ops accept either an unbatched
// [C,H,W] (conv3d: [C,D,H,W]) tensor or a batched one with a leading N axis.
// There is no implicit broadcasting.
namespace egolstm {

// How a convolution output extent is derived from (in + 2*pad - k) / stride.
enum class ExtentRule : std::uint8_t {
  kExact,  // the division must be exact
  kFloor,  // trailing input rows/cols that do not fill a window are dropped
};

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t padding,
                                ExtentRule rule);

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  ExtentRule rule = ExtentRule::kExact;
};

// Cross-correlation. weight: [C_out,C_in,kH,kW]; bias: [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});

// Stride 1 in every dimension, zero padding only on the two spatial axes.
// weight: [C_out,C_in,kD,kH,kW].
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::int64_t spatial_padding);

// Floor extent rule; backward routes to the first maximum in row-major
// window order.
Tensor max_pool2d(const Tensor& input, std::int64_t window, std::int64_t stride);

// Cross-channel local response normalization:
//   out[c] = in[c] / (k + alpha/size * sum_{c' in window(c)} in[c']^2)^beta
// with window(c) = [c - (size-1)/2, c + size/2] clipped to valid channels.
struct LrnOptions {
  std::int64_t size = 5;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};
Tensor lrn(const Tensor& input, const LrnOptions& options = {});

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Adds bias[c] to every element of channel c (axis dim-3 of [C,H,W]/[N,C,H,W]).
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// Joins along an existing axis; shapes must agree off-axis.
Tensor concat(const std::vector<Tensor>& tensors, std::int64_t axis);
// Joins equal-shape tensors along a new axis inserted at `axis`.
Tensor stack(const std::vector<Tensor>& tensors, std::int64_t axis);
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length);
// slice of length 1 with the axis removed.
Tensor select(const Tensor& x, std::int64_t axis, std::int64_t index);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::int64_t>& order);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// [C,H,W] -> [C]; [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

// Softmax along the last axis. Not recorded on the tape.
Tensor softmax(const Tensor& logits);

// logits [K] with one label -> scalar loss; [N,K] with N labels -> [N]
// per-sample losses. loss = -log softmax(logits)[label].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels);
Tensor softmax_cross_entropy(const Tensor& logits, std::int64_t label);

}  // namespace egolstm
