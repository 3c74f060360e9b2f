#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "egolstm/convlstm.hpp"
#include "egolstm/ops.hpp"
#include "egolstm/rng.hpp"
#include "egolstm/tensor.hpp"
#include "egolstm/video_clip.hpp"

namespace egolstm {

enum class InputMode : std::uint8_t { kRawFrames, kFrameDifference };

std::string to_string(InputMode mode);
// Accepts "raw" / "diff".
InputMode parse_input_mode(std::string_view text);

struct PoolSpec {
  std::int64_t window = 2;
  std::int64_t stride = 2;
};

// conv -> ReLU -> [LRN] -> [max-pool]
struct EncoderStage {
  std::int64_t out_channels = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  ExtentRule rule = ExtentRule::kExact;
  bool lrn = false;
  std::optional<PoolSpec> pool;
};

// Convolutional trunk shared by both frame branches.
struct EncoderConfig {
  std::int64_t in_channels = 3;
  std::vector<EncoderStage> stages;
  LrnOptions lrn;
};

struct ModelConfig {
  std::string preset = "full";
  EncoderConfig encoder;
  std::int64_t fusion_out_channels = 256;
  std::int64_t convlstm_channels = 256;
  std::int64_t convlstm_kernel = 3;
  std::int64_t classifier_kernel = 3;
  std::int64_t num_classes = 7;
  InputMode input_mode = InputMode::kRawFrames;
  std::int64_t input_size = 224;

  // Fusion kernel is kFusionDepth x kFusionKernel x kFusionKernel, padding 1.
  static constexpr std::int64_t kFusionDepth = 2;
  static constexpr std::int64_t kFusionKernel = 3;

  // AlexNet-style trunk without grouping, 224x224 input, 256x6x6 features.
  static ModelConfig full(std::int64_t num_classes = 7);
  // 32x32 input, 32x6x6 features, 64 fused channels, 16 hidden channels.
  static ModelConfig tiny(std::int64_t num_classes = 3);
  static ModelConfig from_preset(std::string_view preset, std::int64_t num_classes);

  // [C_e, H_e, W_e] from stage-by-stage extent arithmetic.
  Shape encoder_output_shape() const;
  void validate() const;

  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
};

bool operator==(const EncoderStage& a, const EncoderStage& b);
bool operator==(const ModelConfig& a, const ModelConfig& b);

struct ParamCounts {
  std::vector<std::int64_t> encoder_stages;
  std::int64_t encoder = 0;
  std::int64_t fusion = 0;
  std::int64_t convlstm = 0;
  std::int64_t classifier = 0;
  std::int64_t total = 0;
};

// Closed-form counts; no tensors are allocated.
ParamCounts count_parameters(const ModelConfig& config);

// T-1 for raw frames, T-2 for difference images.
std::int64_t recurrent_steps(std::int64_t frames, InputMode mode);

// The per-step encoder inputs: the frames themselves, or the T-1 difference
// images d_t = f_{t+1} - f_t.
std::vector<Tensor> input_stream(const VideoClip& clip, InputMode mode);

// Successive pairs of the input stream: (f_t, f_{t+1}) or (d_t, d_{t+1}).
std::vector<std::pair<Tensor, Tensor>> prepare_input_sequence(const VideoClip& clip, InputMode mode);

struct ForwardTrace {
  std::int64_t steps = 0;
  Shape feature_shape;  // per-frame encoder output
  Shape state_shape;    // per-video hidden state
  Shape logits_shape;
};

class InteractionNet {
 public:
  struct ConvParams {
    Tensor weight;
    Tensor bias;
  };

  explicit InteractionNet(ModelConfig config, DType dtype = DType::kFloat32);

  const ModelConfig& config() const { return config_; }
  DType dtype() const { return dtype_; }

  // Xavier-uniform weights, zero biases.
  void initialize(Rng& rng);

  // Encoder stages, fusion, ConvLSTM gates, classifier, in that order.
  std::vector<NamedTensor> named_parameters() const;
  // Copies values by name; every parameter must be present with its shape.
  void load_parameters(const std::vector<NamedTensor>& values);
  std::int64_t parameter_count() const;

  const std::vector<ConvParams>& encoder_params() const { return encoder_; }
  const ConvParams& fusion_params() const { return fusion_; }
  const ConvLSTMCell& cell() const { return cell_; }
  const ConvParams& classifier_params() const { return classifier_; }

  // [3,S,S] -> [C_e,H_e,W_e], or batched [N,3,S,S] -> [N,C_e,H_e,W_e].
  Tensor encode(const Tensor& frames) const;
  // Stacks on a new depth axis, applies the 2x3x3 conv3d, squeezes depth.
  Tensor fuse_pair(const Tensor& feat_a, const Tensor& feat_b) const;
  // [N,C_e,L,H_e,W_e] -> [N,C_f,L-1,H_e,W_e]: the fusion conv over every
  // successive pair at once.
  Tensor fuse_sequence(const Tensor& features) const;
  ConvLSTMState step(const Tensor& fused, const ConvLSTMState& state) const;
  // [C_h,H,W] -> [K] or [N,C_h,H,W] -> [N,K]
  Tensor classify(const Tensor& hidden) const;

  // Zero initial state, one ConvLSTM step per input pair, logits [K].
  Tensor forward_video(const VideoClip& clip, ForwardTrace* trace = nullptr) const;
  // Clips must share length and frame shape; logits [N,K].
  Tensor forward_batch(std::span<const VideoClip> clips, ForwardTrace* trace = nullptr) const;

 private:
  ModelConfig config_;
  DType dtype_;
  std::vector<ConvParams> encoder_;
  ConvParams fusion_;
  ConvLSTMCell cell_;
  ConvParams classifier_;
};

}  // namespace egolstm
