#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egolstm/rng.hpp"
#include "egolstm/tensor.hpp"

namespace egolstm {

struct GateParams {
  Tensor wx;    // [C_h, C_in, k, k]
  Tensor wh;    // [C_h, C_h, k, k]
  Tensor bias;  // [C_h]
};

// Convolutional LSTM cell:
//   i = sigma(wx_i * I + wh_i * h + b_i)      f = sigma(wx_f * I + wh_f * h + b_f)
//   g = tanh(wx_g * I + wh_g * h + b_g)       o = sigma(wx_o * I + wh_o * h + b_o)
//   c' = g . i + c . f                         h' = o . tanh(c')
// All convolutions are stride 1 with padding (k-1)/2, so h and c keep the
// input's spatial extent.
struct ConvLSTMCell {
  GateParams input_gate;
  GateParams forget_gate;
  GateParams candidate;
  GateParams output_gate;
  std::int64_t in_channels = 0;
  std::int64_t hidden_channels = 0;
  std::int64_t kernel = 3;

  static ConvLSTMCell zeros(std::int64_t in_channels, std::int64_t hidden_channels, std::int64_t kernel,
                            DType dtype = DType::kFloat64);

  std::int64_t padding() const { return (kernel - 1) / 2; }
  // Gates in the fixed order i, f, g, o.
  std::vector<const GateParams*> gates() const;
  // Names follow `<prefix>.{i|f|g|o}.{wx|wh|bias}`.
  std::vector<NamedTensor> named_parameters(const std::string& prefix = "convlstm") const;
  // Xavier weights, zero biases.
  void initialize(Rng& rng);
  std::int64_t parameter_count() const;
};

struct ConvLSTMState {
  Tensor h;
  Tensor c;

  // [C_h,H,W] or, with batch > 0, [batch,C_h,H,W].
  static ConvLSTMState zeros(std::int64_t hidden_channels, std::int64_t height, std::int64_t width,
                             DType dtype = DType::kFloat64, std::int64_t batch = 0);
};

// The four gate kernels fused into one [4*C_h, C_in+C_h, k, k] kernel and one
// [4*C_h] bias, concatenated through the tape so gradients reach the cell.
struct PackedGates {
  Tensor weight;
  Tensor bias;
};
PackedGates pack_gates(const ConvLSTMCell& cell);

// Accepts [C_in,H,W] (state [C_h,H,W]) or batched [N,C_in,H,W].
ConvLSTMState convlstm_step(const ConvLSTMCell& cell, const Tensor& input, const ConvLSTMState& state);
ConvLSTMState convlstm_step(const ConvLSTMCell& cell, const PackedGates& packed, const Tensor& input,
                            const ConvLSTMState& state);

}  // namespace egolstm
