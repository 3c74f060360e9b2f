#include "egolstm/evaluate.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "egolstm/tape.hpp"

namespace egolstm {

LogitsFn net_logits(const InteractionNet& net) {
  return [&net](std::span<const VideoClip> clips) {
    NoGradScope no_grad;
    return net.forward_batch(clips);
  };
}

EvalProtocol EvalProtocol::for_checkpoint(const Checkpoint& ckpt, std::int64_t crops) {
  EvalProtocol p;
  p.crops = crops;
  p.frames = ckpt.train.frames;
  p.policy = AugmentationPolicy::for_input_size(ckpt.model.input_size);
  p.stats = ckpt.stats;
  p.validate();
  return p;
}

void EvalProtocol::validate() const {
  if (crops != 1 && crops != 10) throw std::invalid_argument("crops must be 10 or 1");
  if (frames < 2) throw std::invalid_argument("evaluation needs at least 2 frames");
  policy.validate();
  stats.validate();
}

std::vector<VideoClip> eval_views(const VideoClip& clip, const EvalProtocol& protocol) {
  const VideoClip sampled = sample_frames_equidistant(clip, protocol.frames);
  const VideoClip rescaled = rescale_clip(sampled, protocol.policy.rescale_h, protocol.policy.rescale_w);
  if (protocol.crops == 10) return ten_crop(rescaled, protocol.stats, protocol.policy.output_size);
  return {center_crop(rescaled, protocol.stats, protocol.policy.output_size)};
}

std::vector<double> average_softmax(const Tensor& logits) {
  if (logits.dim() != 2) throw ShapeError("average_softmax: logits must be [N,K]");
  const std::int64_t n = logits.size(0), k = logits.size(1);
  const auto v = logits.to_vector();
  std::vector<double> mean(static_cast<std::size_t>(k), 0.0);
  for (std::int64_t r = 0; r < n; ++r) {
    const double* row = v.data() + r * k;
    double m = row[0];
    for (std::int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    for (std::int64_t j = 0; j < k; ++j) mean[static_cast<std::size_t>(j)] += std::exp(row[j] - m) / z;
  }
  for (auto& p : mean) p /= static_cast<double>(n);
  return mean;
}

std::int64_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<std::int64_t>(best);
}

std::vector<double> predict_probabilities(const LogitsFn& logits, const VideoClip& clip, const EvalProtocol& protocol) {
  const auto views = eval_views(clip, protocol);
  const Tensor out = logits(views);
  if (!out.all_finite()) throw NumericError("non-finite logits for `" + clip.source_id + "`");
  return average_softmax(out);
}

EvalResult evaluate_clips(const LogitsFn& logits, const std::vector<VideoClip>& clips, const EvalProtocol& protocol,
                          std::int64_t num_classes) {
  protocol.validate();
  EvalResult r;
  r.confusion.assign(static_cast<std::size_t>(num_classes), std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (const auto& clip : clips) {
    if (!clip.label) throw std::invalid_argument("evaluate: clip `" + clip.source_id + "` has no label");
    const auto probs = predict_probabilities(logits, clip, protocol);
    if (static_cast<std::int64_t>(probs.size()) != num_classes) {
      throw std::invalid_argument("evaluate: model emits " + std::to_string(probs.size()) + " classes, dataset has " +
                                  std::to_string(num_classes));
    }
    const std::int64_t pred = argmax(probs);
    r.predictions.push_back(pred);
    r.confusion[static_cast<std::size_t>(*clip.label)][static_cast<std::size_t>(pred)] += 1;
    r.correct += pred == *clip.label;
    ++r.total;
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

EvalResult evaluate(const LogitsFn& logits, const DatasetManifest& manifest, const EvalProtocol& protocol,
                    std::int64_t num_classes) {
  if (manifest.num_classes() != num_classes) {
    throw std::invalid_argument("class count mismatch: manifest has " + std::to_string(manifest.num_classes()) +
                                ", model has " + std::to_string(num_classes));
  }
  std::vector<VideoClip> clips;
  for (const auto& e : manifest.entries) clips.push_back(load_clip(manifest, e));
  return evaluate_clips(logits, clips, protocol, num_classes);
}

EvalResult evaluate_ten_crop(const Checkpoint& ckpt, const DatasetManifest& manifest, std::int64_t crops) {
  const InteractionNet net = build_net(ckpt);
  return evaluate(net_logits(net), manifest, EvalProtocol::for_checkpoint(ckpt, crops), ckpt.model.num_classes);
}

std::string format_confusion_csv(const EvalResult& r, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    os << (t < names.size() ? names[t] : std::to_string(t));
    for (auto c : r.confusion[t]) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

Prediction predict(const Checkpoint& ckpt, const std::filesystem::path& frames_dir, std::int64_t crops) {
  const InteractionNet net = build_net(ckpt);
  const VideoClip clip = load_frames_dir(frames_dir);
  Prediction p;
  p.probabilities = predict_probabilities(net_logits(net), clip, EvalProtocol::for_checkpoint(ckpt, crops));
  p.label = argmax(p.probabilities);
  const auto idx = static_cast<std::size_t>(p.label);
  p.class_name = idx < ckpt.class_names.size() ? ckpt.class_names[idx] : std::to_string(p.label);
  return p;
}

}  // namespace egolstm
