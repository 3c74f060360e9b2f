#include "egolstm/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "egolstm/evaluate.hpp"
#include "egolstm/keyvalue.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

namespace {

// Substreams of the master seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kIterationStream = 1;

ModelConfig with_mode(ModelConfig model, InputMode mode) {
  model.input_mode = mode;
  return model;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  std::string s = std::to_string(row.iteration) + "," + kv::from_double(row.loss) + ",";
  if (row.train_acc) s += kv::from_double(*row.train_acc);
  s += ",";
  if (row.val_acc) s += kv::from_double(*row.val_acc);
  return s;
}

Trainer::Trainer(const DatasetManifest& train, const ModelConfig& model, const TrainConfig& config,
                 const NormalizationStats& stats, const DatasetManifest* val)
    : model_config_(with_mode(model, config.input_mode)),
      config_(config),
      stats_(stats),
      class_names_(train.class_names),
      net_(model_config_, DType::kFloat32),
      optimizer_(net_.named_parameters(), config.optimizer()),
      policy_(AugmentationPolicy::for_input_size(model.input_size)) {
  config_.validate();
  Rng init = Rng(config_.seed).split(kInitStream);
  net_.initialize(init);
  prepare(train, val);
}

Trainer::Trainer(const DatasetManifest& train, const Checkpoint& ckpt, const DatasetManifest* val)
    : model_config_(ckpt.model),
      config_(ckpt.train),
      stats_(ckpt.stats),
      class_names_(ckpt.class_names),
      net_(build_net(ckpt, DType::kFloat32)),
      optimizer_(net_.named_parameters(), ckpt.train.optimizer()),
      policy_(AugmentationPolicy::for_input_size(ckpt.model.input_size)),
      iteration_(static_cast<std::int64_t>(ckpt.iteration)) {
  config_.validate();
  if (ckpt.seed != config_.seed) throw FormatError("checkpoint seed does not match its train config");
  if (train.class_names != class_names_) throw std::invalid_argument("manifest classes differ from the checkpoint's");
  optimizer_.load_state(ckpt.optimizer_state);
  prepare(train, val);
}

void Trainer::prepare(const DatasetManifest& train, const DatasetManifest* val) {
  stats_.validate();
  policy_.validate();
  if (train.entries.empty()) throw std::invalid_argument("training manifest is empty");
  if (train.num_classes() != model_config_.num_classes) {
    throw std::invalid_argument("class count mismatch: manifest has " + std::to_string(train.num_classes()) +
                                ", model has " + std::to_string(model_config_.num_classes));
  }
  for (const auto& e : train.entries) {
    const VideoClip sampled = sample_frames_equidistant(load_clip(train, e), config_.frames);
    train_clips_.push_back(rescale_clip(sampled, policy_.rescale_h, policy_.rescale_w));
  }
  if (val) {
    if (val->num_classes() != model_config_.num_classes) throw std::invalid_argument("validation class count mismatch");
    for (const auto& e : val->entries) val_clips_.push_back(load_clip(*val, e));
  }
}

MetricsRow Trainer::step() {
  Rng rng = Rng(config_.seed).split(kIterationStream).split(static_cast<std::uint64_t>(iteration_));
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  std::vector<VideoClip> batch;
  std::vector<std::int64_t> labels;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto& clip = train_clips_[rng.below(train_clips_.size())];
    Rng aug = rng.split(b + 1);
    batch.push_back(augment_video(clip, policy_, stats_, aug).clip);
    labels.push_back(*clip.label);
  }

  optimizer_.zero_grad();
  MetricsRow row;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor logits = net_.forward_batch(batch);
    const Tensor loss = mean(softmax_cross_entropy(logits, labels));
    row.loss = loss.item();
    if (!std::isfinite(row.loss)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(iteration_ + 1) +
                         " (lr " + kv::from_double(config_.lr) + ")");
    }
    tape.backward(loss);

    const std::int64_t k = logits.size(1);
    const auto values = logits.to_vector();
    std::int64_t correct = 0;
    for (std::size_t b = 0; b < batch_size; ++b) {
      correct += argmax(std::span<const double>(values.data() + b * static_cast<std::size_t>(k), static_cast<std::size_t>(k))) == labels[b];
    }
    row.train_acc = static_cast<double>(correct) / static_cast<double>(batch_size);
  }
  last_step_names_ = optimizer_.step();
  optimizer_.zero_grad();

  ++iteration_;
  row.iteration = iteration_;
  if (config_.eval_every > 0 && iteration_ % config_.eval_every == 0) row.val_acc = validation_accuracy();
  return row;
}

void Trainer::run(std::optional<std::int64_t> until, const std::function<void(const MetricsRow&)>& on_row) {
  const std::int64_t target = until.value_or(config_.iterations);
  while (iteration_ < target) {
    const MetricsRow row = step();
    if (on_row) on_row(row);
  }
}

std::optional<double> Trainer::validation_accuracy() const {
  if (val_clips_.empty()) return std::nullopt;
  EvalProtocol protocol;
  protocol.crops = 1;
  protocol.frames = config_.frames;
  protocol.policy = policy_;
  protocol.stats = stats_;
  return evaluate_clips(net_logits(net_), val_clips_, protocol, model_config_.num_classes).accuracy;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.model = model_config_;
  ckpt.train = config_;
  ckpt.class_names = class_names_;
  ckpt.stats = stats_;
  for (const auto& p : net_.named_parameters()) ckpt.params.push_back({p.name, p.tensor.detach()});
  for (const auto& v : optimizer_.state()) ckpt.optimizer_state.push_back({v.name, v.tensor.detach()});
  ckpt.iteration = static_cast<std::uint64_t>(iteration_);
  ckpt.seed = config_.seed;
  return ckpt;
}

}  // namespace egolstm
