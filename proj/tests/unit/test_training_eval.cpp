#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "egolstm/checkpoint.hpp"
#include "egolstm/errors.hpp"
#include "egolstm/evaluate.hpp"
#include "egolstm/ops.hpp"
#include "egolstm/synth.hpp"
#include "egolstm/tape.hpp"
#include "egolstm/tnsr.hpp"
#include "egolstm/trainer.hpp"
#include "oracles.hpp"

using namespace egolstm;
namespace fs = std::filesystem;

namespace {

struct SynthData {
  fs::path root;
  DatasetManifest train;
  DatasetManifest test;
  NormalizationStats stats;
};

const SynthData& data() {
  static const SynthData d = [] {
    SynthData s;
    s.root = fs::temp_directory_path() / "egolstm_train_data";
    fs::remove_all(s.root);
    SynthConfig cfg;
    cfg.out_dir = s.root;
    cfg.videos_per_class = 2;
    cfg.test_videos_per_class = 1;
    cfg.frames = 8;
    cfg.size = 32;
    s.train = synth_generate(cfg);
    s.test = load_manifest(s.root / "test_manifest.txt");
    s.stats = compute_normalization_stats(s.train, 6);
    return s;
  }();
  return d;
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::defaults_for("tiny");
  c.lr = 1e-3;
  c.batch_size = 3;
  c.frames = 6;
  c.iterations = 4;
  c.seed = 5;
  return c;
}

std::vector<double> losses(Trainer& t, std::int64_t until) {
  std::vector<double> out;
  t.run(until, [&](const MetricsRow& r) { out.push_back(r.loss); });
  return out;
}

std::vector<double> flat_params(const InteractionNet& net) {
  std::vector<double> v;
  for (const auto& p : net.named_parameters()) {
    const auto x = p.tensor.to_vector();
    v.insert(v.end(), x.begin(), x.end());
  }
  return v;
}

}  // namespace

TEST(TrainConfig, DefaultsAndRoundTrip) {
  const TrainConfig full = TrainConfig::defaults_for("full");
  EXPECT_EQ(full.lr, 1e-5);
  EXPECT_EQ(full.batch_size, 12);
  EXPECT_EQ(full.iterations, 10000);
  EXPECT_EQ(full.rho, 0.99);
  EXPECT_EQ(full.eps, 1e-8);
  EXPECT_EQ(TrainConfig::defaults_for("tiny").iterations, 2000);
  TrainConfig c = small_config();
  c.input_mode = InputMode::kFrameDifference;
  EXPECT_EQ(TrainConfig::from_text(c.to_text()), c);
  c.lr = 0;
  EXPECT_NO_THROW(c.validate());
  c.lr = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Metrics, RowFormat) {
  EXPECT_EQ(format_metrics_row({3, 0.5, std::nullopt, std::nullopt}), "3,0.5,,");
  EXPECT_EQ(format_metrics_row({4, 0.25, 1.0, 0.5}), "4,0.25,1,0.5");
  EXPECT_STREQ(kMetricsHeader, "iteration,loss,train_acc,val_acc");
}

TEST(Trainer, SameSeedSameLossesBitwise) {
  Trainer a(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  Trainer b(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  EXPECT_EQ(losses(a, 4), losses(b, 4));
  EXPECT_EQ(encode_checkpoint(a.checkpoint()), encode_checkpoint(b.checkpoint()));
}

TEST(Trainer, ZeroLearningRateFreezesParameters) {
  TrainConfig c = small_config();
  c.lr = 0;
  Trainer t(data().train, ModelConfig::tiny(3), c, data().stats);
  const auto before = flat_params(t.net());
  t.run(3);
  EXPECT_EQ(flat_params(t.net()), before);
}

TEST(Trainer, StepTouchesEveryParameterOnce) {
  Trainer t(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  t.step();
  std::vector<std::string> names;
  for (const auto& p : t.net().named_parameters()) names.push_back(p.name);
  EXPECT_EQ(t.last_step_names(), names);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  Trainer full(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  const auto straight = losses(full, 4);

  Trainer first(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  auto resumed = losses(first, 2);
  const fs::path path = data().root / "resume.clck";
  save_checkpoint(first.checkpoint(), path);
  Trainer second(data().train, load_checkpoint(path));
  EXPECT_EQ(second.iteration(), 2);
  const auto rest = losses(second, 4);
  resumed.insert(resumed.end(), rest.begin(), rest.end());
  EXPECT_EQ(resumed, straight);
  EXPECT_EQ(encode_checkpoint(second.checkpoint()), encode_checkpoint(full.checkpoint()));
}

TEST(Trainer, SeparablePairLearns) {
  DatasetManifest pair;
  pair.root = data().train.root;
  pair.class_names = {"approach", "retreat"};
  for (std::int64_t label : {0, 1}) {
    for (const auto& e : data().train.entries) {
      if (e.label == label) {
        pair.entries.push_back(e);
        break;
      }
    }
  }
  ASSERT_EQ(pair.entries.size(), 2u);
  TrainConfig c = small_config();
  c.batch_size = 2;
  c.iterations = 50;
  Trainer t(pair, ModelConfig::tiny(2), c, data().stats);
  const auto l = losses(t, 50);
  EXPECT_LT(l.back(), std::log(2.0));
  EXPECT_LT(l.back(), l.front());
}

TEST(Trainer, NonFiniteLossAborts) {
  Trainer t(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  const auto& w = t.net().classifier_params().bias;
  w.mutable_data<float>()[0] = std::nanf("");
  EXPECT_THROW(t.step(), NumericError);
}

TEST(Trainer, ClassCountMismatch) {
  EXPECT_THROW(Trainer(data().train, ModelConfig::tiny(5), small_config(), data().stats), std::invalid_argument);
}

TEST(Trainer, ValidationAccuracyReported) {
  TrainConfig c = small_config();
  c.eval_every = 2;
  Trainer t(data().train, ModelConfig::tiny(3), c, data().stats, &data().test);
  std::vector<MetricsRow> rows;
  t.run(2, [&](const MetricsRow& r) { rows.push_back(r); });
  EXPECT_FALSE(rows[0].val_acc.has_value());
  ASSERT_TRUE(rows[1].val_acc.has_value());
  EXPECT_GE(*rows[1].val_acc, 0);
  EXPECT_LE(*rows[1].val_acc, 1);
}

TEST(BatchLoss, EqualsMeanOfPerSampleLosses) {
  InteractionNet net(ModelConfig::tiny(3), DType::kFloat64);
  Rng rng(3);
  net.initialize(rng);
  std::vector<VideoClip> clips;
  std::vector<std::int64_t> labels{0, 2, 1};
  for (int n = 0; n < 3; ++n) {
    VideoClip c;
    for (int t = 0; t < 4; ++t) c.frames.push_back(oracle::random(rng, {3, 32, 32}));
    clips.push_back(c);
  }
  const double batch = mean(softmax_cross_entropy(net.forward_batch(clips), labels)).item();
  double per = 0;
  for (int n = 0; n < 3; ++n) per += softmax_cross_entropy(net.forward_video(clips[n]), labels[n]).item();
  EXPECT_NEAR(batch, per / 3, 1e-12);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Trainer t(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  t.run(1);
  const fs::path a = data().root / "a.clck", b = data().root / "b.clck";
  save_checkpoint(t.checkpoint(), a);
  const Checkpoint loaded = load_checkpoint(a);
  save_checkpoint(loaded, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa{std::istreambuf_iterator<char>(fa), {}}, sb{std::istreambuf_iterator<char>(fb), {}};
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.substr(0, 4), "CLCK");
  EXPECT_EQ(loaded.iteration, 1u);
  EXPECT_EQ(loaded.seed, 5u);
  EXPECT_EQ(loaded.class_names, kSynthClassNames);
  EXPECT_EQ(loaded.stats, data().stats);
  EXPECT_EQ(loaded.model, t.net().config());
}

TEST(Checkpoint, RejectsCorruption) {
  Trainer t(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  auto bytes = encode_checkpoint(t.checkpoint());
  auto magic = bytes;
  magic[1] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  auto version = bytes;
  version[4] = 7;
  EXPECT_THROW(decode_checkpoint(version), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
}

TEST(Checkpoint, ImportWeightsByName) {
  InteractionNet net(ModelConfig::tiny(3), DType::kFloat32);
  const fs::path dir = data().root / "weights";
  fs::create_directories(dir);
  tnsr::save(dir / "classifier.conv.bias.tnsr", Tensor::from_values({3}, {1, 2, 3}));
  const auto names = import_weights(net, dir);
  EXPECT_EQ(names, (std::vector<std::string>{"classifier.conv.bias"}));
  EXPECT_EQ(net.classifier_params().bias.to_vector(), (std::vector<double>{1, 2, 3}));
  tnsr::save(dir / "fusion.conv3d.bias.tnsr", Tensor::zeros({5}));
  EXPECT_THROW(import_weights(net, dir), ShapeError);
}

TEST(Eval, AveragedSoftmaxOfStubModel) {
  EvalProtocol p;
  p.frames = 3;
  p.policy = AugmentationPolicy::for_input_size(32);
  p.stats = data().stats;
  const LogitsFn stub = [](std::span<const VideoClip> views) {
    std::vector<double> v;
    for (std::size_t i = 0; i < views.size(); ++i) {
      v.push_back(static_cast<double>(i));
      v.push_back(-0.5 * static_cast<double>(i));
      v.push_back(i % 3 == 0 ? 2.0 : 0.0);
    }
    return Tensor::from_values({static_cast<std::int64_t>(views.size()), 3}, v);
  };
  const VideoClip clip = load_clip(data().train, data().train.entries[0]);
  const auto probs = predict_probabilities(stub, clip, p);
  std::vector<double> want(3, 0);
  for (int i = 0; i < 10; ++i) {
    const double l[3] = {static_cast<double>(i), -0.5 * i, i % 3 == 0 ? 2.0 : 0.0};
    double z = 0;
    for (double x : l) z += std::exp(x);
    for (int k = 0; k < 3; ++k) want[k] += std::exp(l[k]) / z / 10;
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(probs[k], want[k], 1e-12);
}

TEST(Eval, ArgmaxTiesGoLow) {
  const std::vector<double> v{0.2, 0.4, 0.4};
  EXPECT_EQ(argmax(v), 1);
}

TEST(Eval, SingleVideoCorrectAndDuplicationInvariant) {
  DatasetManifest one = data().test;
  one.entries.resize(1);
  const std::int64_t label = one.entries[0].label;
  const LogitsFn oracle_model = [label](std::span<const VideoClip> views) {
    std::vector<double> v;
    for (std::size_t i = 0; i < views.size(); ++i)
      for (std::int64_t k = 0; k < 3; ++k) v.push_back(k == label ? 1.0 : 0.0);
    return Tensor::from_values({static_cast<std::int64_t>(views.size()), 3}, v);
  };
  EvalProtocol p;
  p.frames = 4;
  p.policy = AugmentationPolicy::for_input_size(32);
  p.stats = data().stats;
  EXPECT_EQ(evaluate(oracle_model, one, p, 3).accuracy, 1.0);

  Checkpoint ckpt = Trainer(data().train, ModelConfig::tiny(3), small_config(), data().stats).checkpoint();
  const double base = evaluate_ten_crop(ckpt, data().test).accuracy;
  DatasetManifest twice = data().test;
  twice.entries.insert(twice.entries.end(), data().test.entries.begin(), data().test.entries.end());
  EXPECT_EQ(evaluate_ten_crop(ckpt, twice).accuracy, base);
  EXPECT_THROW(evaluate_ten_crop(ckpt, DatasetManifest{data().root, {"a", "b"}, {}}), std::invalid_argument);
}

TEST(Eval, NeverMutatesCheckpoint) {
  Trainer t(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  t.run(1);
  const Checkpoint ckpt = t.checkpoint();
  const auto before = encode_checkpoint(ckpt);
  (void)evaluate_ten_crop(ckpt, data().test);
  EXPECT_EQ(encode_checkpoint(ckpt), before);
}

TEST(Eval, ConfusionCsv) {
  EvalResult r;
  r.confusion = {{2, 0}, {1, 3}};
  EXPECT_EQ(format_confusion_csv(r, {"x", "y"}), "true\\predicted,x,y\nx,2,0\ny,1,3\n");
}

TEST(Predict, ProbabilitiesDeterministicAndCropInvariantOnConstantModel) {
  Trainer t(data().train, ModelConfig::tiny(3), small_config(), data().stats);
  t.run(1);
  const fs::path dir = data().root / data().test.entries[0].dir;
  const Prediction a = predict(t.checkpoint(), dir, 10), b = predict(t.checkpoint(), dir, 10);
  double s = 0;
  for (double p : a.probabilities) s += p;
  EXPECT_NEAR(s, 1, 1e-9);
  EXPECT_EQ(a.probabilities, b.probabilities);
  EXPECT_EQ(a.class_name, kSynthClassNames[static_cast<std::size_t>(a.label)]);

  Checkpoint flat = t.checkpoint();
  for (auto& p : flat.params) {
    const bool keep = p.name == "classifier.conv.bias";
    p.tensor = keep ? Tensor::from_values({3}, {0.1, 0.7, -0.2}, DType::kFloat32) : Tensor::zeros(p.tensor.shape(), DType::kFloat32);
  }
  const Prediction ten = predict(flat, dir, 10), one = predict(flat, dir, 1);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(ten.probabilities[k], one.probabilities[k], 1e-7);
  EXPECT_EQ(ten.label, 1);
}
