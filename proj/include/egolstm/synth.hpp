#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "egolstm/dataset.hpp"
#include "egolstm/rng.hpp"

// Synthetic interaction videos: a bright square on a smooth textured
// background that grows (approach), shrinks (retreat) or moves sideways
// (pass), optionally shaken by a global per-frame offset (ego-motion).
namespace egolstm {

enum class SynthClass : std::int64_t { kApproach = 0, kRetreat = 1, kPass = 2 };
inline const std::vector<std::string> kSynthClassNames = {"approach", "retreat", "pass"};

struct SynthConfig {
  std::filesystem::path out_dir;
  std::int64_t videos_per_class = 10;
  std::int64_t test_videos_per_class = 0;
  std::int64_t frames = 24;
  std::int64_t size = 32;
  double ego_jitter = 0.0;  // max global offset per frame, in pixels
  std::uint64_t seed = 7;

  void validate() const;
};

// Square geometry of one frame in pixel units (before ego offset).
struct SquarePose {
  double center_x = 0;
  double center_y = 0;
  double side = 0;
};

struct SynthVideo {
  VideoClip clip;
  std::vector<SquarePose> poses;
  std::vector<std::pair<double, double>> offsets;  // ego offset (dx, dy) per frame
};

SynthVideo synth_render(SynthClass cls, std::int64_t frames, std::int64_t size, double ego_jitter, Rng rng);

// Writes train/<class>_<n>/frame_*.tnsr plus manifest.txt, and test videos
// plus test_manifest.txt when test_videos_per_class > 0. Returns the train
// manifest.
DatasetManifest synth_generate(const SynthConfig& config);

}  // namespace egolstm
