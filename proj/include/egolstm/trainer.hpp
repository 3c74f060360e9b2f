#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "egolstm/checkpoint.hpp"
#include "egolstm/dataset.hpp"
#include "egolstm/model.hpp"
#include "egolstm/optim.hpp"
#include "egolstm/train_config.hpp"

namespace egolstm {

struct MetricsRow {
  std::int64_t iteration = 0;  // 1-based
  double loss = 0;
  std::optional<double> train_acc;  // accuracy of this iteration's batch
  std::optional<double> val_acc;
};

inline constexpr const char* kMetricsHeader = "iteration,loss,train_acc,val_acc";
std::string format_metrics_row(const MetricsRow& row);

// Per iteration: draw batch_size videos with replacement, augment each with
// its own draw, mean cross-entropy over the batch, one backward sweep, one
// RMSProp step over every parameter. All randomness of iteration i derives
// from (seed, i), so resuming from a checkpoint replays the same sequence.
class Trainer {
 public:
  Trainer(const DatasetManifest& train, const ModelConfig& model, const TrainConfig& config,
          const NormalizationStats& stats, const DatasetManifest* val = nullptr);
  // Resumes from a checkpoint: parameters, optimizer state and iteration.
  Trainer(const DatasetManifest& train, const Checkpoint& checkpoint, const DatasetManifest* val = nullptr);

  MetricsRow step();
  // Steps until `until` iterations are complete (default: config iterations).
  void run(std::optional<std::int64_t> until = std::nullopt,
           const std::function<void(const MetricsRow&)>& on_row = nullptr);

  std::int64_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  const InteractionNet& net() const { return net_; }
  InteractionNet& net() { return net_; }
  const RmsProp& optimizer() const { return optimizer_; }
  // Names touched by the most recent optimizer step.
  const std::vector<std::string>& last_step_names() const { return last_step_names_; }
  Checkpoint checkpoint() const;

  // Center-crop accuracy on the validation manifest (nullopt without one).
  std::optional<double> validation_accuracy() const;

 private:
  void prepare(const DatasetManifest& train, const DatasetManifest* val);

  ModelConfig model_config_;
  TrainConfig config_;
  NormalizationStats stats_;
  std::vector<std::string> class_names_;
  InteractionNet net_;
  RmsProp optimizer_;
  AugmentationPolicy policy_;
  std::vector<VideoClip> train_clips_;  // sampled and rescaled, label set
  std::vector<VideoClip> val_clips_;
  std::int64_t iteration_ = 0;
  std::vector<std::string> last_step_names_;
};

}  // namespace egolstm
