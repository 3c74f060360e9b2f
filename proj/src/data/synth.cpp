#include "egolstm/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "egolstm/tnsr.hpp"

namespace egolstm {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (size < 16) throw std::invalid_argument("synth: size must be at least 16");
  if (frames < 3) throw std::invalid_argument("synth: frames must be at least 3");
  if (videos_per_class < 1) throw std::invalid_argument("synth: videos_per_class must be positive");
  if (test_videos_per_class < 0) throw std::invalid_argument("synth: test_videos_per_class must be non-negative");
  if (!(ego_jitter >= 0)) throw std::invalid_argument("synth: ego_jitter must be non-negative");
  if (out_dir.empty()) throw std::invalid_argument("synth: output directory required");
}

namespace {

struct Wave {
  double fx, fy, phase, amplitude;
};

// Length of [a0, a1] ∩ [b0, b1].
double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

}  // namespace

SynthVideo synth_render(SynthClass cls, std::int64_t frames, std::int64_t size, double ego_jitter, Rng rng) {
  const double s = static_cast<double>(size);

  // Smooth texture in [0.1, 0.5] per channel.
  std::array<std::array<Wave, 3>, 3> waves{};
  for (auto& channel : waves) {
    double total = 0;
    for (auto& w : channel) {
      w = {rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(0, 2 * std::numbers::pi), rng.uniform(0.2, 1.0)};
      total += w.amplitude;
    }
    for (auto& w : channel) w.amplitude /= total;
  }
  std::array<double, 3> color{};
  for (auto& c : color) c = rng.uniform(0.8, 1.0);

  SquarePose start, end;
  switch (cls) {
    case SynthClass::kApproach:
    case SynthClass::kRetreat: {
      const double cx = s * (0.5 + rng.uniform(-0.1, 0.1));
      const double cy = s * (0.5 + rng.uniform(-0.1, 0.1));
      start = {cx, cy, s * rng.uniform(0.15, 0.2)};
      end = {cx, cy, s * rng.uniform(0.5, 0.6)};
      if (cls == SynthClass::kRetreat) std::swap(start, end);
      break;
    }
    case SynthClass::kPass: {
      const double side = s * rng.uniform(0.2, 0.3);
      const double cy = s * (0.5 + rng.uniform(-0.15, 0.15));
      start = {s * 0.2, cy, side};
      end = {s * 0.8, cy, side};
      if (rng.bernoulli(0.5)) std::swap(start.center_x, end.center_x);
      break;
    }
    default:
      throw std::invalid_argument("synth: unknown class");
  }

  SynthVideo video;
  video.clip.label = static_cast<std::int64_t>(cls);
  for (std::int64_t t = 0; t < frames; ++t) {
    const double a = static_cast<double>(t) / static_cast<double>(frames - 1);
    const SquarePose pose{start.center_x + a * (end.center_x - start.center_x),
                          start.center_y + a * (end.center_y - start.center_y), start.side + a * (end.side - start.side)};
    const double dx = ego_jitter > 0 ? rng.uniform(-ego_jitter, ego_jitter) : 0.0;
    const double dy = ego_jitter > 0 ? rng.uniform(-ego_jitter, ego_jitter) : 0.0;
    video.poses.push_back(pose);
    video.offsets.emplace_back(dx, dy);

    const double x0 = pose.center_x - pose.side / 2 + dx, x1 = x0 + pose.side;
    const double y0 = pose.center_y - pose.side / 2 + dy, y1 = y0 + pose.side;
    std::vector<float> buf(static_cast<std::size_t>(3 * size * size));
    for (std::int64_t y = 0; y < size; ++y) {
      const double cover_y = overlap(static_cast<double>(y), static_cast<double>(y + 1), y0, y1);
      for (std::int64_t x = 0; x < size; ++x) {
        const double cover = cover_y * overlap(static_cast<double>(x), static_cast<double>(x + 1), x0, x1);
        // The scene moves with the camera offset.
        const double u = (static_cast<double>(x) + 0.5 - dx) / s;
        const double v = (static_cast<double>(y) + 0.5 - dy) / s;
        for (std::size_t c = 0; c < 3; ++c) {
          double texture = 0;
          for (const auto& w : waves[c]) texture += w.amplitude * std::sin(2 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
          const double bg = 0.3 + 0.2 * texture;
          buf[(c * static_cast<std::size_t>(size) + static_cast<std::size_t>(y)) * static_cast<std::size_t>(size) +
              static_cast<std::size_t>(x)] = static_cast<float>(bg * (1 - cover) + color[c] * cover);
        }
      }
    }
    video.clip.frames.push_back(Tensor::from_buffer({3, size, size}, std::move(buf)));
  }
  return video;
}

namespace {

DatasetManifest write_split(const SynthConfig& config, const std::string& split, std::int64_t per_class,
                            std::uint64_t split_stream) {
  DatasetManifest m{config.out_dir, kSynthClassNames, {}};
  const Rng base = Rng(config.seed).split(split_stream);
  for (std::int64_t cls = 0; cls < 3; ++cls) {
    for (std::int64_t n = 0; n < per_class; ++n) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03lld", kSynthClassNames[static_cast<std::size_t>(cls)].c_str(),
                    static_cast<long long>(n));
      const std::string rel = split + "/" + name;
      const fs::path dir = config.out_dir / rel;
      fs::create_directories(dir);
      const auto video = synth_render(static_cast<SynthClass>(cls), config.frames, config.size, config.ego_jitter,
                                      base.split(static_cast<std::uint64_t>(cls * per_class + n)));
      for (std::int64_t t = 0; t < config.frames; ++t) {
        tnsr::save(dir / frame_file_name(t), video.clip.frames[static_cast<std::size_t>(t)]);
      }
      m.entries.push_back({rel, cls, config.frames});
    }
  }
  return m;
}

}  // namespace

DatasetManifest synth_generate(const SynthConfig& config) {
  config.validate();
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw std::runtime_error("synth: cannot create " + config.out_dir.string() + ": " + ec.message());
  DatasetManifest train = write_split(config, "train", config.videos_per_class, 0);
  save_manifest(train, config.out_dir / "manifest.txt");
  if (config.test_videos_per_class > 0) {
    save_manifest(write_split(config, "test", config.test_videos_per_class, 1), config.out_dir / "test_manifest.txt");
  }
  return train;
}

}  // namespace egolstm
