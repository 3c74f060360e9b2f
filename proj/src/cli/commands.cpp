#include <chrono>
#include <deque>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "egolstm/cli.hpp"
#include "egolstm/errors.hpp"
#include "egolstm/evaluate.hpp"
#include "egolstm/gradcheck.hpp"
#include "egolstm/trainer.hpp"

namespace egolstm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require(const std::filesystem::path& p, const char* flag) {
  if (p.empty()) throw std::invalid_argument(std::string(flag) + " is required");
}

bool given(const kv::Entries& entries, std::string_view key) {
  for (const auto& [k, v] : entries) {
    if (k == key) return true;
  }
  return false;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read `" + path.string() + "`");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string join_values(const std::array<double, 3>& v) {
  return kv::from_double(v[0]) + " " + kv::from_double(v[1]) + " " + kv::from_double(v[2]);
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
  require(c.out, "--out");
  const SynthConfig s = c.synth_config();
  const DatasetManifest train = synth_generate(s);
  out << "train: " << train.entries.size() << " videos -> " << (s.out_dir / "manifest.txt").string() << '\n';
  if (s.test_videos_per_class > 0) {
    out << "test: " << s.test_videos_per_class * static_cast<std::int64_t>(kSynthClassNames.size()) << " videos -> "
        << (s.out_dir / "test_manifest.txt").string() << '\n';
  }
  return kExitOk;
}

int cmd_stats(const RunConfig& c, std::ostream& out) {
  require(c.manifest, "--manifest");
  require(c.out, "--out");
  const NormalizationStats stats = compute_normalization_stats(load_manifest(c.manifest), c.train.frames);
  stats.save(c.out);
  out << "mean: " << join_values(stats.mean) << '\n' << "std: " << join_values(stats.std) << '\n';
  out << "wrote " << c.out.string() << '\n';
  return kExitOk;
}

// Rows of an earlier metrics file up to and including `iteration`.
std::vector<std::string> metrics_rows_until(const std::filesystem::path& path, std::uint64_t iteration) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (kv::to_uint("metrics iteration", line.substr(0, comma)) > iteration) break;
    rows.push_back(line);
  }
  return rows;
}

int cmd_train(const RunConfig& c, const kv::Entries& entries, std::ostream& out) {
  require(c.manifest, "--manifest");
  require(c.out, "--out");
  const DatasetManifest full = load_manifest(c.manifest);
  std::filesystem::create_directories(c.out);
  const auto ckpt_path = c.out / "checkpoint.clck";
  const auto metrics_path = c.out / "metrics.csv";

  std::optional<DatasetManifest> val;
  if (!c.val_manifest.empty()) val = load_manifest(c.val_manifest);
  auto split = [&](double fraction) {
    if (val || fraction <= 0) return full;
    auto [t, v] = split_train_val(full, fraction);
    val = std::move(v);
    return t;
  };

  std::unique_ptr<Trainer> trainer;
  std::vector<std::string> kept_rows;
  if (!c.resume.empty()) {
    static const std::set<std::string> fixed = {"preset", "input_mode", "lr", "batch_size", "rho", "eps",
                                                "seed", "frames", "eval_every", "val_split", "stats", "init_weights",
                                                "num_classes"};
    for (const auto& [k, v] : entries) {
      if (fixed.count(k)) throw std::invalid_argument("`" + k + "` cannot change on --resume; it comes from the checkpoint");
    }
    Checkpoint ckpt = load_checkpoint(c.resume);
    if (given(entries, "iterations")) ckpt.train.iterations = c.train.iterations;
    const DatasetManifest train = split(ckpt.train.val_split);
    kept_rows = metrics_rows_until(metrics_path, ckpt.iteration);
    trainer = std::make_unique<Trainer>(train, ckpt, val ? &*val : nullptr);
    out << "resumed at iteration " << ckpt.iteration << '\n';
  } else {
    const DatasetManifest train = split(c.train.val_split);
    NormalizationStats stats;
    if (!c.stats.empty()) {
      stats = NormalizationStats::load(c.stats);
    } else {
      stats = compute_normalization_stats(train, c.train.frames);
      stats.save(c.out / "norm_stats.tnsr");
      out << "stats: computed from the training manifest -> " << (c.out / "norm_stats.tnsr").string() << '\n';
    }
    if (c.num_classes && *c.num_classes != train.num_classes()) {
      throw std::invalid_argument("--classes " + std::to_string(*c.num_classes) + " but the manifest has " +
                                  std::to_string(train.num_classes()) + " classes");
    }
    const ModelConfig model = ModelConfig::from_preset(c.train.preset, train.num_classes());
    trainer = std::make_unique<Trainer>(train, model, c.train, stats, val ? &*val : nullptr);
    if (!c.init_weights.empty()) {
      const auto names = import_weights(trainer->net(), c.init_weights);
      out << "imported " << names.size() << " tensors from " << c.init_weights.string() << '\n';
    }
  }

  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::invalid_argument("cannot write `" + metrics_path.string() + "`");
  metrics << kMetricsHeader << '\n';
  for (const auto& r : kept_rows) metrics << r << '\n';
  metrics.flush();

  const std::int64_t target = trainer->config().iterations;
  const auto start = Clock::now();
  trainer->run(target, [&](const MetricsRow& row) {
    metrics << format_metrics_row(row) << '\n';
    metrics.flush();
    if (c.log_every > 0 && (row.iteration % c.log_every == 0 || row.iteration == target)) {
      out << fmt::format("iter {} loss {:.6f} train_acc {:.3f}", row.iteration, row.loss, row.train_acc.value_or(0.0));
      if (row.val_acc) out << fmt::format(" val_acc {:.3f}", *row.val_acc);
      out << '\n';
    }
    if (c.checkpoint_every > 0 && row.iteration % c.checkpoint_every == 0 && row.iteration != target) {
      save_checkpoint(trainer->checkpoint(), ckpt_path);
    }
  });
  save_checkpoint(trainer->checkpoint(), ckpt_path);
  out << "wrote " << ckpt_path.string() << " and " << metrics_path.string() << '\n';
  out << fmt::format("time: train {:.1f} s\n", seconds_since(start));
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  require(c.checkpoint, "--checkpoint");
  require(c.manifest, "--manifest");
  const auto start = Clock::now();
  const Checkpoint ckpt = load_checkpoint(c.checkpoint);
  const EvalResult r = evaluate_ten_crop(ckpt, load_manifest(c.manifest), c.crops);
  const std::string csv = format_confusion_csv(r, ckpt.class_names);
  out << fmt::format("accuracy: {:.6f} ({}/{})\n", r.accuracy, r.correct, r.total);
  out << csv;
  if (!c.csv.empty()) {
    std::ofstream f(c.csv, std::ios::trunc);
    if (!f) throw std::invalid_argument("cannot write `" + c.csv.string() + "`");
    f << csv;
    out << "wrote " << c.csv.string() << '\n';
  }
  out << fmt::format("time: eval {:.1f} s\n", seconds_since(start));
  return kExitOk;
}

int cmd_predict(const RunConfig& c, std::ostream& out) {
  require(c.checkpoint, "--checkpoint");
  require(c.frames_dir, "--frames-dir");
  const Checkpoint ckpt = load_checkpoint(c.checkpoint);
  const Prediction p = predict(ckpt, c.frames_dir, c.crops);
  out << "class: " << p.class_name << '\n';
  for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
    const std::string name = i < ckpt.class_names.size() ? ckpt.class_names[i] : std::to_string(i);
    out << fmt::format("p[{}]: {:.6f}\n", name, p.probabilities[i]);
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const auto rows = run_gradcheck(c.op, c.train.seed, c.trials);
  out << fmt::format("{:<24} {:>6} {:>13} {:>9}  result\n", "op", "trials", "max_rel_error", "tolerance");
  int status = kExitOk;
  for (const auto& r : rows) {
    out << fmt::format("{:<24} {:>6} {:>13.3e} {:>9.0e}  {}\n", r.op, r.trials, r.max_rel_error, r.tolerance,
                       r.pass ? "PASS" : "FAIL");
    if (!r.pass) {
      err << fmt::format("gradcheck-fail: {} max relative error {:.3e} exceeds {:.0e}\n", r.op, r.max_rel_error, r.tolerance);
      status = kExitNumeric;
    }
  }
  out << fmt::format("time: gradcheck {:.1f} s\n", seconds_since(start));
  return status;
}

int cmd_params(const RunConfig& c, std::ostream& out) {
  const std::int64_t k = c.num_classes.value_or(7);
  const ModelConfig model = ModelConfig::from_preset(c.train.preset, k);
  const ParamCounts p = count_parameters(model);
  out << "preset: " << c.train.preset << '\n' << "classes: " << k << '\n';
  for (std::size_t i = 0; i < p.encoder_stages.size(); ++i) out << "encoder.stage" << i + 1 << ": " << p.encoder_stages[i] << '\n';
  out << "encoder: " << p.encoder << '\n'
      << "fusion: " << p.fusion << '\n'
      << "convlstm: " << p.convlstm << '\n'
      << "classifier: " << p.classifier << '\n'
      << "total: " << p.total << '\n';
  if (c.train.preset == "full") {
    out << "note: the published comparison quotes 21.8M parameters for this model (vs 61.3M for LRCN); "
           "the listed layer shapes give the total above, see README\n";
  }
  return kExitOk;
}

// One string-valued CLI option bound to a config key.
struct BoundFlag {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::deque<BoundFlag> flags;
  std::string config_path;
  bool dump = false;

  void add(const std::string& flag, const std::string& key, const std::string& help) {
    auto& b = flags.emplace_back();
    b.key = key;
    b.option = app->add_option(flag, b.value, help + " [" + key + "]");
  }

  kv::Entries given_entries() const {
    kv::Entries e;
    for (const auto& b : flags) {
      if (b.option->count() > 0) e.emplace_back(b.key, b.value);
    }
    return e;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stream ConvLSTM interaction classifier"};
  app.require_subcommand(1);
  std::deque<Subcommand> subs;
  auto make = [&](const std::string& name, const std::string& about) -> Subcommand& {
    auto& s = subs.emplace_back();
    s.app = app.add_subcommand(name, about);
    s.app->add_option("--config", s.config_path, "key = value file; flags override it");
    s.app->add_flag("--dump-config", s.dump, "print the effective configuration and exit");
    return s;
  };

  auto& synth = make("synth", "generate the synthetic approach/retreat/pass dataset");
  synth.add("--out", "out", "output directory");
  synth.add("--videos-per-class", "synth.videos_per_class", "training videos per class");
  synth.add("--test-videos-per-class", "synth.test_videos_per_class", "test videos per class");
  synth.add("--frames", "synth.frames", "frames per video");
  synth.add("--size", "synth.size", "frame height and width");
  synth.add("--ego-jitter", "synth.ego_jitter", "max global per-frame shift in pixels");
  synth.add("--seed", "synth.seed", "generator seed");

  auto& stats = make("stats", "per-channel normalization statistics of a manifest");
  stats.add("--manifest", "manifest", "dataset manifest");
  stats.add("--out", "out", "output .tnsr path");
  stats.add("--frames", "frames", "equidistant frames per clip");

  auto& train = make("train", "train a network; writes checkpoint.clck and metrics.csv into --out");
  train.add("--manifest", "manifest", "training manifest");
  train.add("--val-manifest", "val_manifest", "validation manifest");
  train.add("--stats", "stats", "normalization stats (computed from the manifest if absent)");
  train.add("--preset", "preset", "full|tiny");
  train.add("--mode", "input_mode", "raw|diff");
  train.add("--iters", "iterations", "total iterations");
  train.add("--lr", "lr", "RMSProp learning rate");
  train.add("--batch", "batch_size", "videos per iteration");
  train.add("--seed", "seed", "master seed");
  train.add("--frames", "frames", "equidistant frames per clip");
  train.add("--rho", "rho", "RMSProp decay");
  train.add("--eps", "eps", "RMSProp epsilon");
  train.add("--eval-every", "eval_every", "validation period in iterations (0 = off)");
  train.add("--val-split", "val_split", "hashed validation fraction of --manifest");
  train.add("--classes", "num_classes", "expected class count");
  train.add("--out", "out", "output directory");
  train.add("--resume", "resume", "checkpoint to continue from");
  train.add("--init-weights", "init_weights", "directory of <param>.tnsr files to import");
  train.add("--log-every", "log_every", "progress line period (0 = quiet)");
  train.add("--checkpoint-every", "checkpoint_every", "intermediate checkpoint period (0 = end only)");

  auto& eval = make("eval", "accuracy and confusion matrix of a checkpoint on a manifest");
  eval.add("--checkpoint", "checkpoint", "checkpoint file");
  eval.add("--manifest", "manifest", "evaluation manifest");
  eval.add("--crops", "crops", "10|1");
  eval.add("--csv", "csv", "also write the confusion matrix here");

  auto& pred = make("predict", "classify one directory of frames");
  pred.add("--checkpoint", "checkpoint", "checkpoint file");
  pred.add("--frames-dir", "frames_dir", "directory of frame_NNNN.tnsr files");
  pred.add("--crops", "crops", "10|1");

  auto& grad = make("gradcheck", "finite-difference gradient suite");
  grad.add("--op", "op", "all or one op name");
  grad.add("--seed", "seed", "seed");
  grad.add("--trials", "trials", "random trials per op");

  auto& params = make("params", "parameter counts per group");
  params.add("--preset", "preset", "full|tiny");
  params.add("--classes", "num_classes", "number of classes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    for (const auto& s : subs) {
      if (s.app->parsed()) {
        out << s.app->help();
        return kExitOk;
      }
    }
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    Subcommand* active = nullptr;
    for (auto& s : subs) {
      if (s.app->parsed()) active = &s;
    }
    const std::string name = active->app->get_name();
    kv::Entries file;
    if (!active->config_path.empty()) {
      file = kv::parse(read_text(active->config_path));
      for (const auto& [k, v] : file) {
        if (k == "command" && v != name) throw std::invalid_argument("config file is for `" + v + "`, not `" + name + "`");
      }
    }
    const kv::Entries flags = active->given_entries();
    kv::Entries merged = merge_entries(merge_entries(file, flags), {{"command", name}});
    const RunConfig config = RunConfig::from_entries(merged);
    if (active->dump) {
      out << config.to_text();
      return kExitOk;
    }
    if (name == "synth") return cmd_synth(config, out);
    if (name == "stats") return cmd_stats(config, out);
    if (name == "train") return cmd_train(config, merged, out);
    if (name == "eval") return cmd_eval(config, out);
    if (name == "predict") return cmd_predict(config, out);
    if (name == "gradcheck") return cmd_gradcheck(config, out, err);
    return cmd_params(config, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace egolstm
