#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "egolstm/keyvalue.hpp"
#include "egolstm/synth.hpp"
#include "egolstm/train_config.hpp"

namespace egolstm {

// Effective settings of one CLI invocation. Every field is reachable through
// exactly one flat key (see run_config_keys()); defaults < config file < flags.
struct RunConfig {
  std::string command;

  std::filesystem::path manifest;
  std::filesystem::path val_manifest;
  std::filesystem::path stats;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::filesystem::path frames_dir;
  std::filesystem::path resume;
  std::filesystem::path init_weights;
  std::filesystem::path csv;

  TrainConfig train;
  std::optional<std::int64_t> num_classes;
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 0;

  std::int64_t crops = 10;
  std::string op = "all";
  std::int64_t trials = 20;

  std::int64_t synth_videos_per_class = 10;
  std::int64_t synth_test_videos_per_class = 0;
  std::int64_t synth_frames = 24;
  std::int64_t synth_size = 32;
  double synth_ego_jitter = 0.0;
  std::uint64_t synth_seed = 7;

  SynthConfig synth_config() const;

  // Builds from merged entries; train defaults follow the `preset` entry.
  // Unknown keys and malformed values throw std::invalid_argument.
  static RunConfig from_entries(const kv::Entries& entries);
  kv::Entries to_entries() const;
  static RunConfig from_text(std::string_view text);
  std::string to_text() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

const std::vector<std::string>& run_config_keys();

// Entries of `override_entries` replace same-key entries of `base`.
kv::Entries merge_entries(kv::Entries base, const kv::Entries& override_entries);

// Exit codes: 0 success, 1 validation error (`error:`), 2 numeric failure
// (`error:` for NaN losses, `gradcheck-fail:` for failed checks).
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumeric = 2;

// Allocator settings for long training/eval processes (glibc only).
void tune_allocator();

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace egolstm
