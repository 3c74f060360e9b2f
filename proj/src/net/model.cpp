#include "egolstm/model.hpp"

#include <map>
#include <sstream>
#include <stdexcept>

#include "egolstm/fpenv.hpp"
#include "egolstm/keyvalue.hpp"
#include "egolstm/optim.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

std::string to_string(InputMode mode) { return mode == InputMode::kRawFrames ? "raw" : "diff"; }

InputMode parse_input_mode(std::string_view text) {
  if (text == "raw") return InputMode::kRawFrames;
  if (text == "diff") return InputMode::kFrameDifference;
  throw std::invalid_argument("unknown input mode `" + std::string(text) + "` (expected raw|diff)");
}

// ---------------------------------------------------------------------------
// Configuration

ModelConfig ModelConfig::full(std::int64_t num_classes) {
  ModelConfig c;
  c.preset = "full";
  c.num_classes = num_classes;
  c.input_size = 224;
  // conv1 uses padding 2 with floor extents: (224 + 4 - 11) / 4 + 1 = 55.
  c.encoder.stages = {
      {96, 11, 4, 2, ExtentRule::kFloor, true, PoolSpec{3, 2}},
      {256, 5, 1, 2, ExtentRule::kExact, true, PoolSpec{3, 2}},
      {384, 3, 1, 1, ExtentRule::kExact, false, std::nullopt},
      {384, 3, 1, 1, ExtentRule::kExact, false, std::nullopt},
      {256, 3, 1, 1, ExtentRule::kExact, false, PoolSpec{3, 2}},
  };
  c.fusion_out_channels = 256;
  c.convlstm_channels = 256;
  return c;
}

ModelConfig ModelConfig::tiny(std::int64_t num_classes) {
  ModelConfig c;
  c.preset = "tiny";
  c.num_classes = num_classes;
  c.input_size = 32;
  c.encoder.stages = {
      {16, 5, 1, 2, ExtentRule::kExact, false, PoolSpec{2, 2}},
      {32, 3, 1, 1, ExtentRule::kExact, false, PoolSpec{2, 2}},
      {32, 3, 1, 1, ExtentRule::kExact, false, PoolSpec{3, 1}},
  };
  c.fusion_out_channels = 64;
  c.convlstm_channels = 16;
  return c;
}

ModelConfig ModelConfig::from_preset(std::string_view preset, std::int64_t num_classes) {
  if (preset == "full") return full(num_classes);
  if (preset == "tiny") return tiny(num_classes);
  throw std::invalid_argument("unknown preset `" + std::string(preset) + "` (expected full|tiny)");
}

Shape ModelConfig::encoder_output_shape() const {
  std::int64_t extent = input_size;
  std::int64_t channels = encoder.in_channels;
  for (std::size_t s = 0; s < encoder.stages.size(); ++s) {
    const auto& st = encoder.stages[s];
    try {
      extent = conv_output_extent(extent, st.kernel, st.stride, st.padding, st.rule);
      if (st.pool) {
        if (st.pool->window > extent) throw ShapeError("pool window exceeds feature extent");
        extent = (extent - st.pool->window) / st.pool->stride + 1;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("encoder stage " + std::to_string(s + 1) + ": " + e.what());
    }
    channels = st.out_channels;
  }
  return {channels, extent, extent};
}

void ModelConfig::validate() const {
  auto positive = [](std::int64_t v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("ModelConfig: ") + name + " must be positive");
  };
  positive(fusion_out_channels, "fusion_out_channels");
  positive(convlstm_channels, "convlstm_channels");
  positive(num_classes, "num_classes");
  positive(input_size, "input_size");
  if (encoder.stages.empty()) throw std::invalid_argument("ModelConfig: encoder has no stages");
  for (const auto& st : encoder.stages) {
    positive(st.out_channels, "encoder out_channels");
    positive(st.kernel, "encoder kernel");
    positive(st.stride, "encoder stride");
  }
  if (convlstm_kernel % 2 == 0 || convlstm_kernel < 1) throw std::invalid_argument("ModelConfig: convlstm_kernel must be odd");
  if (classifier_kernel % 2 == 0 || classifier_kernel < 1) {
    throw std::invalid_argument("ModelConfig: classifier_kernel must be odd");
  }
  (void)encoder_output_shape();
}

namespace {

std::string stage_to_text(const EncoderStage& st) {
  std::ostringstream os;
  os << "conv " << st.out_channels << ' ' << st.kernel << ' ' << st.stride << ' ' << st.padding << ' '
     << (st.rule == ExtentRule::kExact ? "exact" : "floor");
  if (st.lrn) os << "; lrn";
  if (st.pool) os << "; pool " << st.pool->window << ' ' << st.pool->stride;
  return os.str();
}

EncoderStage stage_from_text(const std::string& key, const std::string& text) {
  EncoderStage st;
  bool have_conv = false;
  for (const auto& part : kv::split(text, ';')) {
    std::istringstream is(part);
    std::string word;
    is >> word;
    if (word == "conv") {
      std::string rule;
      if (!(is >> st.out_channels >> st.kernel >> st.stride >> st.padding >> rule)) {
        throw std::invalid_argument(key + ": malformed conv spec");
      }
      if (rule != "exact" && rule != "floor") throw std::invalid_argument(key + ": extent rule must be exact|floor");
      st.rule = rule == "exact" ? ExtentRule::kExact : ExtentRule::kFloor;
      have_conv = true;
    } else if (word == "lrn") {
      st.lrn = true;
    } else if (word == "pool") {
      PoolSpec p;
      if (!(is >> p.window >> p.stride)) throw std::invalid_argument(key + ": malformed pool spec");
      st.pool = p;
    } else {
      throw std::invalid_argument(key + ": unknown stage element `" + word + "`");
    }
  }
  if (!have_conv) throw std::invalid_argument(key + ": stage needs a conv spec");
  return st;
}

}  // namespace

std::string ModelConfig::to_text() const {
  kv::Entries e;
  e.emplace_back("preset", preset);
  e.emplace_back("input_mode", egolstm::to_string(input_mode));
  e.emplace_back("input_size", std::to_string(input_size));
  e.emplace_back("num_classes", std::to_string(num_classes));
  e.emplace_back("fusion_out_channels", std::to_string(fusion_out_channels));
  e.emplace_back("convlstm_channels", std::to_string(convlstm_channels));
  e.emplace_back("convlstm_kernel", std::to_string(convlstm_kernel));
  e.emplace_back("classifier_kernel", std::to_string(classifier_kernel));
  e.emplace_back("encoder.in_channels", std::to_string(encoder.in_channels));
  e.emplace_back("encoder.lrn", std::to_string(encoder.lrn.size) + " " + kv::from_double(encoder.lrn.k) + " " +
                                    kv::from_double(encoder.lrn.alpha) + " " + kv::from_double(encoder.lrn.beta));
  for (std::size_t s = 0; s < encoder.stages.size(); ++s) {
    e.emplace_back("encoder.stage" + std::to_string(s + 1), stage_to_text(encoder.stages[s]));
  }
  return kv::format(e);
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  c.encoder.stages.clear();
  std::map<std::int64_t, EncoderStage> stages;
  for (const auto& [key, value] : kv::parse(text)) {
    if (key == "preset") {
      c.preset = value;
    } else if (key == "input_mode") {
      c.input_mode = parse_input_mode(value);
    } else if (key == "input_size") {
      c.input_size = kv::to_int(key, value);
    } else if (key == "num_classes") {
      c.num_classes = kv::to_int(key, value);
    } else if (key == "fusion_out_channels") {
      c.fusion_out_channels = kv::to_int(key, value);
    } else if (key == "convlstm_channels") {
      c.convlstm_channels = kv::to_int(key, value);
    } else if (key == "convlstm_kernel") {
      c.convlstm_kernel = kv::to_int(key, value);
    } else if (key == "classifier_kernel") {
      c.classifier_kernel = kv::to_int(key, value);
    } else if (key == "encoder.in_channels") {
      c.encoder.in_channels = kv::to_int(key, value);
    } else if (key == "encoder.lrn") {
      std::istringstream is(value);
      if (!(is >> c.encoder.lrn.size >> c.encoder.lrn.k >> c.encoder.lrn.alpha >> c.encoder.lrn.beta)) {
        throw std::invalid_argument("encoder.lrn: expected `size k alpha beta`");
      }
    } else if (key.rfind("encoder.stage", 0) == 0) {
      const auto index = kv::to_int(key, std::string_view(key).substr(13));
      stages[index] = stage_from_text(key, value);
    } else {
      throw std::invalid_argument("unknown model config key `" + key + "`");
    }
  }
  std::int64_t expected = 1;
  for (auto& [index, st] : stages) {
    if (index != expected++) throw std::invalid_argument("encoder stages must be numbered 1..n without gaps");
    c.encoder.stages.push_back(st);
  }
  c.validate();
  return c;
}

bool operator==(const EncoderStage& a, const EncoderStage& b) {
  const bool pools_equal = a.pool.has_value() == b.pool.has_value() &&
                           (!a.pool || (a.pool->window == b.pool->window && a.pool->stride == b.pool->stride));
  return a.out_channels == b.out_channels && a.kernel == b.kernel && a.stride == b.stride && a.padding == b.padding &&
         a.rule == b.rule && a.lrn == b.lrn && pools_equal;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_text() == b.to_text(); }

// ---------------------------------------------------------------------------
// Parameter counting

ParamCounts count_parameters(const ModelConfig& config) {
  ParamCounts counts;
  std::int64_t in = config.encoder.in_channels;
  for (const auto& st : config.encoder.stages) {
    const std::int64_t n = st.kernel * st.kernel * in * st.out_channels + st.out_channels;
    counts.encoder_stages.push_back(n);
    counts.encoder += n;
    in = st.out_channels;
  }
  const std::int64_t kf = ModelConfig::kFusionKernel;
  counts.fusion = ModelConfig::kFusionDepth * kf * kf * in * config.fusion_out_channels + config.fusion_out_channels;
  const std::int64_t k = config.convlstm_kernel;
  const std::int64_t ch = config.convlstm_channels;
  counts.convlstm = 4 * (k * k * (config.fusion_out_channels + ch) * ch + ch);
  const std::int64_t kc = config.classifier_kernel;
  counts.classifier = kc * kc * ch * config.num_classes + config.num_classes;
  counts.total = counts.encoder + counts.fusion + counts.convlstm + counts.classifier;
  return counts;
}

// ---------------------------------------------------------------------------
// Input sequences

std::int64_t recurrent_steps(std::int64_t frames, InputMode mode) {
  return mode == InputMode::kRawFrames ? frames - 1 : frames - 2;
}

std::vector<Tensor> input_stream(const VideoClip& clip, InputMode mode) {
  clip.validate();
  const std::int64_t needed = mode == InputMode::kRawFrames ? 2 : 3;
  if (clip.length() < needed) {
    throw std::invalid_argument(to_string(mode) + " input needs at least " + std::to_string(needed) +
                                " frames, clip has " + std::to_string(clip.length()));
  }
  if (mode == InputMode::kRawFrames) return clip.frames;
  std::vector<Tensor> diffs;
  diffs.reserve(clip.frames.size() - 1);
  NoGradScope no_grad;
  for (std::size_t t = 0; t + 1 < clip.frames.size(); ++t) diffs.push_back(sub(clip.frames[t + 1], clip.frames[t]));
  return diffs;
}

std::vector<std::pair<Tensor, Tensor>> prepare_input_sequence(const VideoClip& clip, InputMode mode) {
  const auto stream = input_stream(clip, mode);
  std::vector<std::pair<Tensor, Tensor>> pairs;
  pairs.reserve(stream.size() - 1);
  for (std::size_t t = 0; t + 1 < stream.size(); ++t) pairs.emplace_back(stream[t], stream[t + 1]);
  return pairs;
}

// ---------------------------------------------------------------------------
// Network

InteractionNet::InteractionNet(ModelConfig config, DType dtype) : config_(std::move(config)), dtype_(dtype) {
  config_.validate();
  auto make = [dtype](Shape w, std::int64_t out) {
    ConvParams p{Tensor::zeros(std::move(w), dtype), Tensor::zeros({out}, dtype)};
    p.weight.set_requires_grad(true);
    p.bias.set_requires_grad(true);
    return p;
  };
  std::int64_t in = config_.encoder.in_channels;
  for (const auto& st : config_.encoder.stages) {
    encoder_.push_back(make({st.out_channels, in, st.kernel, st.kernel}, st.out_channels));
    in = st.out_channels;
  }
  const std::int64_t kf = ModelConfig::kFusionKernel;
  fusion_ = make({config_.fusion_out_channels, in, ModelConfig::kFusionDepth, kf, kf}, config_.fusion_out_channels);
  cell_ = ConvLSTMCell::zeros(config_.fusion_out_channels, config_.convlstm_channels, config_.convlstm_kernel, dtype);
  for (auto& p : cell_.named_parameters()) p.tensor.set_requires_grad(true);
  const std::int64_t kc = config_.classifier_kernel;
  classifier_ = make({config_.num_classes, config_.convlstm_channels, kc, kc}, config_.num_classes);
}

void InteractionNet::initialize(Rng& rng) {
  auto init_conv = [&](ConvParams& p, std::int64_t receptive) {
    const std::int64_t fan_in = p.weight.size(1) * receptive;
    const std::int64_t fan_out = p.weight.size(0) * receptive;
    p.weight.assign(xavier_init(p.weight.shape(), fan_in, fan_out, rng));
    p.bias.assign(Tensor::zeros(p.bias.shape()));
  };
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    const auto k = config_.encoder.stages[s].kernel;
    init_conv(encoder_[s], k * k);
  }
  const std::int64_t kf = ModelConfig::kFusionKernel;
  init_conv(fusion_, ModelConfig::kFusionDepth * kf * kf);
  cell_.initialize(rng);
  init_conv(classifier_, config_.classifier_kernel * config_.classifier_kernel);
}

std::vector<NamedTensor> InteractionNet::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    const std::string base = "encoder.stage" + std::to_string(s + 1) + ".conv.";
    out.push_back({base + "weight", encoder_[s].weight});
    out.push_back({base + "bias", encoder_[s].bias});
  }
  out.push_back({"fusion.conv3d.weight", fusion_.weight});
  out.push_back({"fusion.conv3d.bias", fusion_.bias});
  for (auto& p : cell_.named_parameters("convlstm")) out.push_back(std::move(p));
  out.push_back({"classifier.conv.weight", classifier_.weight});
  out.push_back({"classifier.conv.bias", classifier_.bias});
  return out;
}

void InteractionNet::load_parameters(const std::vector<NamedTensor>& values) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& v : values) by_name[v.name] = &v.tensor;
  for (auto& p : named_parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::invalid_argument("missing parameter `" + p.name + "`");
    if (it->second->shape() != p.tensor.shape()) {
      throw ShapeError("parameter `" + p.name + "` has shape " + shape_string(it->second->shape()) + ", expected " +
                       shape_string(p.tensor.shape()));
    }
    p.tensor.assign(*it->second);
  }
}

std::int64_t InteractionNet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

Tensor InteractionNet::encode(const Tensor& frames) const {
  if (frames.dim() != 3 && frames.dim() != 4) throw ShapeError("encode: frames must be [3,S,S] or [N,3,S,S]");
  if (frames.size(-3) != config_.encoder.in_channels || frames.size(-1) != config_.input_size ||
      frames.size(-2) != config_.input_size) {
    throw ShapeError("encode: frame shape " + shape_string(frames.shape()) + " does not match input size " +
                     std::to_string(config_.input_size));
  }
  Tensor x = frames;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    const auto& st = config_.encoder.stages[s];
    x = relu(conv2d(x, encoder_[s].weight, encoder_[s].bias, {st.stride, st.padding, st.rule}));
    if (st.lrn) x = lrn(x, config_.encoder.lrn);
    if (st.pool) x = max_pool2d(x, st.pool->window, st.pool->stride);
  }
  return x;
}

Tensor InteractionNet::fuse_pair(const Tensor& feat_a, const Tensor& feat_b) const {
  check_same_shape(feat_a, feat_b, "fuse_pair");
  if (feat_a.dim() != 3 && feat_a.dim() != 4) throw ShapeError("fuse_pair: features must be [C,H,W] or [N,C,H,W]");
  const std::int64_t depth_axis = feat_a.dim() - 2;
  const Tensor stacked = stack({feat_a, feat_b}, depth_axis);
  const Tensor fused = conv3d(stacked, fusion_.weight, fusion_.bias, ModelConfig::kFusionKernel / 2);
  return select(fused, depth_axis, 0);
}

Tensor InteractionNet::fuse_sequence(const Tensor& features) const {
  if (features.dim() != 5) throw ShapeError("fuse_sequence: features must be [N,C,L,H,W]");
  return conv3d(features, fusion_.weight, fusion_.bias, ModelConfig::kFusionKernel / 2);
}

ConvLSTMState InteractionNet::step(const Tensor& fused, const ConvLSTMState& state) const {
  return convlstm_step(cell_, fused, state);
}

Tensor InteractionNet::classify(const Tensor& hidden) const {
  const Tensor maps = conv2d(hidden, classifier_.weight, classifier_.bias,
                             {1, (config_.classifier_kernel - 1) / 2, ExtentRule::kExact});
  return global_avg_pool(maps);
}

Tensor InteractionNet::forward_video(const VideoClip& clip, ForwardTrace* trace) const {
  const Tensor logits = forward_batch(std::span<const VideoClip>(&clip, 1), trace);
  if (trace) trace->logits_shape = {config_.num_classes};
  return reshape(logits, {config_.num_classes});
}

Tensor InteractionNet::forward_batch(std::span<const VideoClip> clips, ForwardTrace* trace) const {
  if (clips.empty()) throw std::invalid_argument("forward_batch: no clips");
  FlushDenormalsScope ftz;
  const std::int64_t batch = static_cast<std::int64_t>(clips.size());
  std::vector<std::vector<Tensor>> streams;
  for (const auto& clip : clips) {
    streams.push_back(input_stream(clip, config_.input_mode));
    if (streams.back().size() != streams.front().size() ||
        streams.back().front().shape() != streams.front().front().shape()) {
      throw ShapeError("forward_batch: clips must share length and frame shape");
    }
  }
  const std::int64_t length = static_cast<std::int64_t>(streams.front().size());
  const Shape frame_shape = streams.front().front().shape();

  // All encoder inputs as one [N*L,3,S,S] batch; inputs carry no gradient.
  Tensor frames = dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    const std::int64_t per = shape_numel(frame_shape);
    std::vector<T> buf;
    buf.reserve(static_cast<std::size_t>(batch * length * per));
    for (const auto& stream : streams) {
      for (const auto& f : stream) {
        const auto values = f.dtype() == dtype_ ? f : f.to(dtype_);
        auto src = values.template data<T>();
        buf.insert(buf.end(), src.begin(), src.end());
      }
    }
    Shape s{batch * length};
    s.insert(s.end(), frame_shape.begin(), frame_shape.end());
    return Tensor::from_buffer(std::move(s), std::move(buf));
  });

  const Tensor features = encode(frames);  // [N*L,C,h,w]
  const std::int64_t c = features.size(1), h = features.size(2), w = features.size(3);
  const Tensor sequence = permute(reshape(features, {batch, length, c, h, w}), {0, 2, 1, 3, 4});
  const Tensor fused = fuse_sequence(sequence);  // [N,C_f,L-1,h,w]

  ConvLSTMState state = ConvLSTMState::zeros(config_.convlstm_channels, h, w, dtype_, batch);
  const PackedGates packed = pack_gates(cell_);
  const std::int64_t steps = length - 1;
  for (std::int64_t t = 0; t < steps; ++t) state = convlstm_step(cell_, packed, select(fused, 2, t), state);

  Tensor logits = classify(state.h);
  if (trace) {
    trace->steps = steps;
    trace->feature_shape = {c, h, w};
    trace->state_shape = {config_.convlstm_channels, h, w};
    trace->logits_shape = logits.shape();
  }
  return logits;
}

}  // namespace egolstm
