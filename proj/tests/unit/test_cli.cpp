#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "egolstm/cli.hpp"

using namespace egolstm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "egolstm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("egolstm_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Output with the wall-clock lines removed.
std::string without_time(const std::string& s) {
  std::istringstream in(s);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("time:", 0) != 0) out += line + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Small synthetic corpus shared by the train/eval/predict tests.
const fs::path& corpus() {
  static const fs::path dir = [] {
    const fs::path d = scratch("corpus");
    const auto r = run({"synth", "--out", d.string(), "--videos-per-class", "2", "--test-videos-per-class", "1",
                        "--frames", "6", "--size", "32", "--seed", "7"});
    if (r.code != 0) throw std::runtime_error(r.err);
    return d;
  }();
  return dir;
}

std::vector<std::string> train_args(const fs::path& out, const std::string& iters) {
  return {"train",   "--manifest", (corpus() / "manifest.txt").string(), "--preset", "tiny", "--iters", iters, "--batch", "2",
          "--frames", "4",         "--lr", "1e-3", "--seed", "3", "--out", out.string(), "--log-every", "1"};
}

}  // namespace

TEST(Cli, ParamsFullPreset) {
  const auto r = run({"params", "--preset", "full", "--classes", "7"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("convlstm: 4719616\n"), std::string::npos);
  EXPECT_NE(r.out.find("fusion: 1179904\n"), std::string::npos);
  EXPECT_NE(r.out.find("classifier: 16135\n"), std::string::npos);
  EXPECT_NE(r.out.find("total: "), std::string::npos);
  EXPECT_NE(r.out.find("21.8M"), std::string::npos);
}

TEST(Cli, GradcheckAllPasses) {
  const auto r = run({"gradcheck", "--op", "all"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("convlstm_step"), std::string::npos);
  EXPECT_TRUE(r.err.empty());
}

TEST(Cli, ValidationErrorsExitOne) {
  auto r = run({"gradcheck", "--op", "bogus"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u);
  r = run({"train", "--preset", "tiny"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("--manifest"), std::string::npos);
  r = run({"eval", "--checkpoint", "/nonexistent.clck", "--manifest", "/nonexistent.txt"});
  EXPECT_EQ(r.code, kExitInvalid);
  r = run({"params", "--preset", "huge"});
  EXPECT_EQ(r.code, kExitInvalid);
  r = run({"params", "--no-such-flag"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_EQ(run({}).code, kExitInvalid);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--manifest"), std::string::npos);
}

TEST(Cli, SynthTwiceIdenticalDigests) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  for (const auto& d : {a, b}) {
    const auto r = run({"synth", "--out", d.string(), "--videos-per-class", "1", "--frames", "5", "--size", "16"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(tree(a), tree(b));
}

TEST(Cli, ConfigPrecedenceAndRoundTrip) {
  const fs::path cfg = scratch("config.txt");
  std::ofstream(cfg) << "# run settings\nlr = 0.01\nbatch_size = 4\npreset = tiny\n";
  auto r = run({"train", "--config", cfg.string(), "--lr", "0.02", "--dump-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("lr = 0.02\n"), std::string::npos);
  EXPECT_NE(r.out.find("batch_size = 4\n"), std::string::npos);
  EXPECT_NE(r.out.find("iterations = 2000\n"), std::string::npos);

  const fs::path dumped = scratch("dumped.txt");
  std::ofstream(dumped) << r.out;
  const auto again = run({"train", "--config", dumped.string(), "--dump-config"});
  EXPECT_EQ(again.out, r.out);
  EXPECT_EQ(RunConfig::from_text(r.out), RunConfig::from_text(again.out));

  std::ofstream(cfg) << "learning_rate = 0.1\n";
  r = run({"train", "--config", cfg.string(), "--dump-config"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);

  std::ofstream(cfg) << "command = eval\n";
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--dump-config"}).code, kExitInvalid);
}

TEST(RunConfig, EveryKeyRoundTrips) {
  RunConfig c;
  c.command = "train";
  c.manifest = "/m.txt";
  c.train = TrainConfig::defaults_for("tiny");
  c.train.lr = 0.1 + 0.2;
  c.train.input_mode = InputMode::kFrameDifference;
  c.num_classes = 4;
  c.synth_ego_jitter = 1.5;
  EXPECT_EQ(RunConfig::from_text(c.to_text()), c);
  std::size_t dumped = 0;
  for (const auto& [k, v] : c.to_entries()) {
    EXPECT_NE(std::find(run_config_keys().begin(), run_config_keys().end(), k), run_config_keys().end());
    ++dumped;
  }
  EXPECT_GT(dumped, 20u);
  EXPECT_THROW(RunConfig::from_text("nope = 1\n"), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_text("lr = fast\n"), std::invalid_argument);
}

TEST(Cli, TrainIsReproducible) {
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  const auto ra = run(train_args(a, "3")), rb = run(train_args(b, "3"));
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(slurp(a / "checkpoint.clck"), slurp(b / "checkpoint.clck"));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_NE(ra.out.find("time: "), std::string::npos);
  std::string oa = without_time(ra.out), ob = without_time(rb.out);
  // Output directories differ by name only.
  auto strip = [](std::string s, const std::string& dir) {
    for (auto p = s.find(dir); p != std::string::npos; p = s.find(dir)) s.replace(p, dir.size(), "<out>");
    return s;
  };
  EXPECT_EQ(strip(oa, a.string()), strip(ob, b.string()));
  const std::string csv = slurp(a / "metrics.csv");
  EXPECT_EQ(csv.rfind("iteration,loss,train_acc,val_acc\n1,", 0), 0u);
}

TEST(Cli, ResumeMatchesStraightRun) {
  const fs::path straight = scratch("straight"), split = scratch("split");
  ASSERT_EQ(run(train_args(straight, "4")).code, 0);
  ASSERT_EQ(run(train_args(split, "2")).code, 0);
  const auto r = run({"train", "--manifest", (corpus() / "manifest.txt").string(), "--resume",
                      (split / "checkpoint.clck").string(), "--iters", "4", "--out", split.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(split / "checkpoint.clck"), slurp(straight / "checkpoint.clck"));
  EXPECT_EQ(slurp(split / "metrics.csv"), slurp(straight / "metrics.csv"));
  const auto bad = run({"train", "--manifest", (corpus() / "manifest.txt").string(), "--resume",
                        (split / "checkpoint.clck").string(), "--lr", "1", "--out", split.string()});
  EXPECT_EQ(bad.code, kExitInvalid);
}

TEST(Cli, EvalAndPredict) {
  const fs::path out = scratch("evaluated");
  ASSERT_EQ(run(train_args(out, "2")).code, 0);
  const fs::path csv = out / "confusion.csv";
  auto r = run({"eval", "--checkpoint", (out / "checkpoint.clck").string(), "--manifest",
                (corpus() / "test_manifest.txt").string(), "--crops", "10", "--csv", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("accuracy: ", 0), 0u);
  EXPECT_NE(r.out.find("true\\predicted,approach,retreat,pass\n"), std::string::npos);
  EXPECT_EQ(slurp(csv).rfind("true\\predicted", 0), 0u);

  r = run({"predict", "--checkpoint", (out / "checkpoint.clck").string(), "--frames-dir",
           (corpus() / "test" / "pass_000").string(), "--crops", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("class: ", 0), 0u);
  EXPECT_NE(r.out.find("p[pass]: "), std::string::npos);
  EXPECT_EQ(run({"eval", "--checkpoint", (out / "checkpoint.clck").string(), "--manifest",
                 (corpus() / "manifest.txt").string(), "--crops", "3"})
                .code,
            kExitInvalid);
}

TEST(Cli, StatsCommand) {
  const fs::path out = scratch("stats.tnsr");
  const auto r = run({"stats", "--manifest", (corpus() / "manifest.txt").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out));
  EXPECT_EQ(r.out.rfind("mean: ", 0), 0u);
}

TEST(Cli, DivergentTrainingExitsTwo) {
  const fs::path out = scratch("diverge");
  auto args = train_args(out, "5");
  args[std::find(args.begin(), args.end(), "--lr") - args.begin() + 1] = "1e30";
  const auto r = run(args);
  EXPECT_EQ(r.code, kExitNumeric);
  EXPECT_NE(r.err.find("error: non-finite loss"), std::string::npos);
}
