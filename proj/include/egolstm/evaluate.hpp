#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egolstm/checkpoint.hpp"
#include "egolstm/dataset.hpp"
#include "egolstm/frames.hpp"

namespace egolstm {

// Logits [N,K] for N preprocessed clips.
using LogitsFn = std::function<Tensor(std::span<const VideoClip>)>;

// Forward passes without recording, batched over the given clips.
LogitsFn net_logits(const InteractionNet& net);

struct EvalProtocol {
  std::int64_t crops = 10;  // 10 (five crops and flips) or 1 (center)
  std::int64_t frames = 20;
  AugmentationPolicy policy;
  NormalizationStats stats;

  static EvalProtocol for_checkpoint(const Checkpoint& checkpoint, std::int64_t crops);
  void validate() const;
};

// Equidistant frames, rescale, then the protocol's crops.
std::vector<VideoClip> eval_views(const VideoClip& clip, const EvalProtocol& protocol);

// Softmax of each row of [N,K] logits, averaged over rows.
std::vector<double> average_softmax(const Tensor& logits);
// Index of the maximum; ties go to the lowest index.
std::int64_t argmax(std::span<const double> values);

std::vector<double> predict_probabilities(const LogitsFn& logits, const VideoClip& clip, const EvalProtocol& protocol);

struct EvalResult {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  double accuracy = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<std::int64_t> predictions;
};

// Clips carry their labels.
EvalResult evaluate_clips(const LogitsFn& logits, const std::vector<VideoClip>& clips, const EvalProtocol& protocol,
                          std::int64_t num_classes);
EvalResult evaluate(const LogitsFn& logits, const DatasetManifest& manifest, const EvalProtocol& protocol,
                    std::int64_t num_classes);
// Never mutates the checkpoint.
EvalResult evaluate_ten_crop(const Checkpoint& checkpoint, const DatasetManifest& manifest, std::int64_t crops = 10);

// `true\predicted,name0,...` then one row per true class.
std::string format_confusion_csv(const EvalResult& result, const std::vector<std::string>& class_names);

struct Prediction {
  std::int64_t label = 0;
  std::string class_name;
  std::vector<double> probabilities;
};

Prediction predict(const Checkpoint& checkpoint, const std::filesystem::path& frames_dir, std::int64_t crops = 10);

}  // namespace egolstm
