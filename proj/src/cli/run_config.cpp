#include <functional>
#include <map>
#include <stdexcept>

#include "egolstm/cli.hpp"

namespace egolstm {

namespace {

struct KeySpec {
  std::string key;
  // nullopt means "omit from dumps" (unset path or optional).
  std::function<std::optional<std::string>(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

KeySpec path_key(std::string key, std::filesystem::path RunConfig::*field) {
  return {std::move(key),
          [field](const RunConfig& c) -> std::optional<std::string> {
            if ((c.*field).empty()) return std::nullopt;
            return (c.*field).string();
          },
          [field](RunConfig& c, const std::string& v) { c.*field = v; }};
}

template <class Owner, class Get>
KeySpec int_key(std::string key, Get owner, std::int64_t Owner::*field) {
  return {key, [owner, field](const RunConfig& c) -> std::optional<std::string> { return std::to_string(owner(c).*field); },
          [owner, field, key](RunConfig& c, const std::string& v) { owner(c).*field = kv::to_int(key, v); }};
}

template <class Owner, class Get>
KeySpec uint_key(std::string key, Get owner, std::uint64_t Owner::*field) {
  return {key, [owner, field](const RunConfig& c) -> std::optional<std::string> { return std::to_string(owner(c).*field); },
          [owner, field, key](RunConfig& c, const std::string& v) { owner(c).*field = kv::to_uint(key, v); }};
}

template <class Owner, class Get>
KeySpec double_key(std::string key, Get owner, double Owner::*field) {
  return {key, [owner, field](const RunConfig& c) -> std::optional<std::string> { return kv::from_double(owner(c).*field); },
          [owner, field, key](RunConfig& c, const std::string& v) { owner(c).*field = kv::to_double(key, v); }};
}

// Field owners: the RunConfig itself or its TrainConfig.
struct Self {
  RunConfig& operator()(RunConfig& c) const { return c; }
  const RunConfig& operator()(const RunConfig& c) const { return c; }
};
struct Train {
  TrainConfig& operator()(RunConfig& c) const { return c.train; }
  const TrainConfig& operator()(const RunConfig& c) const { return c.train; }
};

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    s.push_back({"command",
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (c.command.empty()) return std::nullopt;
                   return c.command;
                 },
                 [](RunConfig& c, const std::string& v) { c.command = v; }});
    s.push_back(path_key("manifest", &RunConfig::manifest));
    s.push_back(path_key("val_manifest", &RunConfig::val_manifest));
    s.push_back(path_key("stats", &RunConfig::stats));
    s.push_back(path_key("out", &RunConfig::out));
    s.push_back(path_key("checkpoint", &RunConfig::checkpoint));
    s.push_back(path_key("frames_dir", &RunConfig::frames_dir));
    s.push_back(path_key("resume", &RunConfig::resume));
    s.push_back(path_key("init_weights", &RunConfig::init_weights));
    s.push_back(path_key("csv", &RunConfig::csv));

    s.push_back({"preset", [](const RunConfig& c) -> std::optional<std::string> { return c.train.preset; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "full" && v != "tiny") throw std::invalid_argument("unknown preset `" + v + "` (expected full|tiny)");
                   c.train.preset = v;
                 }});
    s.push_back({"input_mode", [](const RunConfig& c) -> std::optional<std::string> { return to_string(c.train.input_mode); },
                 [](RunConfig& c, const std::string& v) { c.train.input_mode = parse_input_mode(v); }});
    s.push_back(double_key("lr", Train{}, &TrainConfig::lr));
    s.push_back(int_key("batch_size", Train{}, &TrainConfig::batch_size));
    s.push_back(int_key("iterations", Train{}, &TrainConfig::iterations));
    s.push_back(double_key("rho", Train{}, &TrainConfig::rho));
    s.push_back(double_key("eps", Train{}, &TrainConfig::eps));
    s.push_back(uint_key("seed", Train{}, &TrainConfig::seed));
    s.push_back(int_key("frames", Train{}, &TrainConfig::frames));
    s.push_back(int_key("eval_every", Train{}, &TrainConfig::eval_every));
    s.push_back(double_key("val_split", Train{}, &TrainConfig::val_split));

    s.push_back({"num_classes",
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.num_classes) return std::nullopt;
                   return std::to_string(*c.num_classes);
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v.empty()) {
                     c.num_classes.reset();
                   } else {
                     c.num_classes = kv::to_int("num_classes", v);
                   }
                 }});
    s.push_back(int_key("log_every", Self{}, &RunConfig::log_every));
    s.push_back(int_key("checkpoint_every", Self{}, &RunConfig::checkpoint_every));
    s.push_back(int_key("crops", Self{}, &RunConfig::crops));
    s.push_back({"op", [](const RunConfig& c) -> std::optional<std::string> { return c.op; },
                 [](RunConfig& c, const std::string& v) { c.op = v; }});
    s.push_back(int_key("trials", Self{}, &RunConfig::trials));

    s.push_back(int_key("synth.videos_per_class", Self{}, &RunConfig::synth_videos_per_class));
    s.push_back(int_key("synth.test_videos_per_class", Self{}, &RunConfig::synth_test_videos_per_class));
    s.push_back(int_key("synth.frames", Self{}, &RunConfig::synth_frames));
    s.push_back(int_key("synth.size", Self{}, &RunConfig::synth_size));
    s.push_back(double_key("synth.ego_jitter", Self{}, &RunConfig::synth_ego_jitter));
    s.push_back(uint_key("synth.seed", Self{}, &RunConfig::synth_seed));
    return s;
  }();
  return specs;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& s : key_specs()) k.push_back(s.key);
    return k;
  }();
  return keys;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s;
  s.out_dir = out;
  s.videos_per_class = synth_videos_per_class;
  s.test_videos_per_class = synth_test_videos_per_class;
  s.frames = synth_frames;
  s.size = synth_size;
  s.ego_jitter = synth_ego_jitter;
  s.seed = synth_seed;
  return s;
}

RunConfig RunConfig::from_entries(const kv::Entries& entries) {
  std::map<std::string, const KeySpec*> by_key;
  for (const auto& s : key_specs()) by_key[s.key] = &s;

  RunConfig c;
  for (const auto& [key, value] : entries) {
    if (!by_key.count(key)) throw std::invalid_argument("unknown config key `" + key + "`");
    if (key == "preset") {
      by_key.at(key)->set(c, value);
      c.train = TrainConfig::defaults_for(value);
    }
  }
  for (const auto& [key, value] : entries) by_key.at(key)->set(c, value);
  return c;
}

kv::Entries RunConfig::to_entries() const {
  kv::Entries e;
  for (const auto& s : key_specs()) {
    if (auto v = s.get(*this)) e.emplace_back(s.key, *v);
  }
  return e;
}

RunConfig RunConfig::from_text(std::string_view text) { return from_entries(kv::parse(text)); }

std::string RunConfig::to_text() const { return kv::format(to_entries()); }

bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_entries() == b.to_entries(); }

kv::Entries merge_entries(kv::Entries base, const kv::Entries& override_entries) {
  for (const auto& [key, value] : override_entries) {
    bool replaced = false;
    for (auto& [k, v] : base) {
      if (k == key) {
        v = value;
        replaced = true;
      }
    }
    if (!replaced) base.emplace_back(key, value);
  }
  return base;
}

}  // namespace egolstm
