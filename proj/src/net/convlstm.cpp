#include "egolstm/convlstm.hpp"

#include "egolstm/ops.hpp"
#include "egolstm/optim.hpp"

namespace egolstm {

namespace {

constexpr const char* kGateNames[4] = {"i", "f", "g", "o"};

GateParams zero_gate(std::int64_t cin, std::int64_t ch, std::int64_t k, DType dtype) {
  return {Tensor::zeros({ch, cin, k, k}, dtype), Tensor::zeros({ch, ch, k, k}, dtype), Tensor::zeros({ch}, dtype)};
}

void check_cell(const ConvLSTMCell& cell) {
  if (cell.kernel < 1 || cell.kernel % 2 == 0) {
    throw ShapeError("ConvLSTMCell: kernel must be odd and positive, got " + std::to_string(cell.kernel));
  }
  for (const GateParams* g : cell.gates()) {
    const Shape wx{cell.hidden_channels, cell.in_channels, cell.kernel, cell.kernel};
    const Shape wh{cell.hidden_channels, cell.hidden_channels, cell.kernel, cell.kernel};
    if (g->wx.shape() != wx || g->wh.shape() != wh || g->bias.shape() != Shape{cell.hidden_channels}) {
      throw ShapeError("ConvLSTMCell: gate parameter shapes do not match (C_in, C_h, k)");
    }
  }
}

}  // namespace

ConvLSTMCell ConvLSTMCell::zeros(std::int64_t in_channels, std::int64_t hidden_channels, std::int64_t kernel,
                                 DType dtype) {
  ConvLSTMCell cell;
  cell.in_channels = in_channels;
  cell.hidden_channels = hidden_channels;
  cell.kernel = kernel;
  cell.input_gate = zero_gate(in_channels, hidden_channels, kernel, dtype);
  cell.forget_gate = zero_gate(in_channels, hidden_channels, kernel, dtype);
  cell.candidate = zero_gate(in_channels, hidden_channels, kernel, dtype);
  cell.output_gate = zero_gate(in_channels, hidden_channels, kernel, dtype);
  check_cell(cell);
  return cell;
}

std::vector<const GateParams*> ConvLSTMCell::gates() const {
  return {&input_gate, &forget_gate, &candidate, &output_gate};
}

std::vector<NamedTensor> ConvLSTMCell::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  const auto all = gates();
  for (std::size_t g = 0; g < all.size(); ++g) {
    const std::string base = prefix + "." + kGateNames[g] + ".";
    out.push_back({base + "wx", all[g]->wx});
    out.push_back({base + "wh", all[g]->wh});
    out.push_back({base + "bias", all[g]->bias});
  }
  return out;
}

void ConvLSTMCell::initialize(Rng& rng) {
  const std::int64_t kk = kernel * kernel;
  // In place, so handles held elsewhere (optimizer state, tapes) stay valid.
  for (GateParams* g : {&input_gate, &forget_gate, &candidate, &output_gate}) {
    g->wx.assign(xavier_init(g->wx.shape(), in_channels * kk, hidden_channels * kk, rng));
    g->wh.assign(xavier_init(g->wh.shape(), hidden_channels * kk, hidden_channels * kk, rng));
    g->bias.assign(Tensor::zeros(g->bias.shape()));
  }
}

std::int64_t ConvLSTMCell::parameter_count() const {
  return 4 * (kernel * kernel * (in_channels + hidden_channels) * hidden_channels + hidden_channels);
}

ConvLSTMState ConvLSTMState::zeros(std::int64_t hidden_channels, std::int64_t height, std::int64_t width, DType dtype,
                                   std::int64_t batch) {
  Shape shape = batch > 0 ? Shape{batch, hidden_channels, height, width} : Shape{hidden_channels, height, width};
  return {Tensor::zeros(shape, dtype), Tensor::zeros(shape, dtype)};
}

PackedGates pack_gates(const ConvLSTMCell& cell) {
  check_cell(cell);
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  for (const GateParams* g : cell.gates()) {
    weights.push_back(concat({g->wx, g->wh}, 1));
    biases.push_back(g->bias);
  }
  return {concat(weights, 0), concat(biases, 0)};
}

ConvLSTMState convlstm_step(const ConvLSTMCell& cell, const Tensor& input, const ConvLSTMState& state) {
  return convlstm_step(cell, pack_gates(cell), input, state);
}

ConvLSTMState convlstm_step(const ConvLSTMCell& cell, const PackedGates& packed, const Tensor& input,
                            const ConvLSTMState& state) {
  if (input.dim() != 3 && input.dim() != 4) throw ShapeError("convlstm_step: input must be [C,H,W] or [N,C,H,W]");
  check_same_shape(state.h, state.c, "convlstm_step(state)");
  if (state.h.dim() != input.dim()) throw ShapeError("convlstm_step: input and state ranks differ");
  const std::int64_t ch = cell.hidden_channels;
  if (input.size(-3) != cell.in_channels) {
    throw ShapeError("convlstm_step: input has " + std::to_string(input.size(-3)) + " channels, cell expects " +
                     std::to_string(cell.in_channels));
  }
  if (state.h.size(-3) != ch || state.h.size(-1) != input.size(-1) || state.h.size(-2) != input.size(-2) ||
      (input.dim() == 4 && state.h.size(0) != input.size(0))) {
    throw ShapeError("convlstm_step: state " + shape_string(state.h.shape()) + " does not match input " +
                     shape_string(input.shape()));
  }
  const std::int64_t channel_axis = input.dim() - 3;
  const Tensor stacked = concat({input, state.h}, channel_axis);
  const Tensor z = conv2d(stacked, packed.weight, packed.bias, {1, cell.padding(), ExtentRule::kExact});
  const Tensor i = sigmoid(slice(z, channel_axis, 0, ch));
  const Tensor f = sigmoid(slice(z, channel_axis, ch, ch));
  const Tensor g = tanh(slice(z, channel_axis, 2 * ch, ch));
  const Tensor o = sigmoid(slice(z, channel_axis, 3 * ch, ch));
  Tensor c_next = add(hadamard(g, i), hadamard(state.c, f));
  Tensor h_next = hadamard(o, tanh(c_next));
  return {std::move(h_next), std::move(c_next)};
}

}  // namespace egolstm
