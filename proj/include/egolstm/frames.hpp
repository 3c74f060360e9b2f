#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "egolstm/rng.hpp"
#include "egolstm/tensor.hpp"
#include "egolstm/video_clip.hpp"

// Frame-level preprocessing. Frames are [3,H,W]; none of these operations are
// recorded on the tape.
namespace egolstm {

// idx(i) = round(i*(N-1)/(T-1)) when N >= T, else 0..N-1 then the last index
// repeated up to length T.
std::vector<std::int64_t> equidistant_indices(std::int64_t n, std::int64_t t = 20);
VideoClip sample_frames_equidistant(const VideoClip& clip, std::int64_t t = 20);

// Bilinear resampling with half-pixel centers: the source coordinate of
// output index i is (i + 0.5) * in/out - 0.5, clamped to [0, in-1].
Tensor rescale(const Tensor& frame, std::int64_t out_h, std::int64_t out_w);

enum class CropPosition : std::uint8_t { kTopLeft, kTopRight, kBottomLeft, kBottomRight, kCenter };
inline constexpr std::array<CropPosition, 5> kCropPositions = {
    CropPosition::kTopLeft, CropPosition::kTopRight, CropPosition::kBottomLeft, CropPosition::kBottomRight,
    CropPosition::kCenter};
const char* to_string(CropPosition position);

// Square window; rows [row, row+size), cols [col, col+size).
struct CropWindow {
  std::int64_t row = 0;
  std::int64_t col = 0;
  std::int64_t size = 0;
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

// Corners flush to the borders; center at floor((H-s)/2), floor((W-s)/2).
CropWindow crop_window(std::int64_t height, std::int64_t width, std::int64_t size, CropPosition position);
Tensor crop(const Tensor& frame, const CropWindow& window);
// Crop at `position`, then rescale to out_size x out_size.
Tensor scale_jitter_crop(const Tensor& frame, std::int64_t size, CropPosition position, std::int64_t out_size = 224);
Tensor horizontal_flip(const Tensor& frame);

struct NormalizationStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};

  void validate() const;
  // 2x3 f64: row 0 mean, row 1 std.
  Tensor to_tensor() const;
  static NormalizationStats from_tensor(const Tensor& t);
  void save(const std::filesystem::path& path) const;
  static NormalizationStats load(const std::filesystem::path& path);
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

// (x - mean[c]) / std[c] per channel.
Tensor normalize(const Tensor& frame, const NormalizationStats& stats);

// Two-pass population mean and standard deviation per channel over every
// pixel of every frame, accumulated in f64. Throws NumericError on a zero
// standard deviation.
NormalizationStats compute_normalization_stats(const std::vector<VideoClip>& clips);

struct AugmentationPolicy {
  std::int64_t rescale_h = 256;
  std::int64_t rescale_w = 340;
  std::vector<std::int64_t> crop_sizes{256, 224, 192, 168};
  double flip_probability = 0.5;
  std::int64_t output_size = 224;

  // The 224-pixel policy with every extent scaled by input_size/224 and
  // rounded; identity for input_size 224.
  static AugmentationPolicy for_input_size(std::int64_t input_size);
  void validate() const;
};

// One draw per video per iteration, applied to every frame of that video.
struct AugmentationDraw {
  std::int64_t size = 0;
  CropPosition position = CropPosition::kCenter;
  bool flip = false;
  friend bool operator==(const AugmentationDraw&, const AugmentationDraw&) = default;
};

AugmentationDraw draw_augmentation(const AugmentationPolicy& policy, Rng& rng);

struct AugmentedClip {
  VideoClip clip;
  AugmentationDraw draw;
  std::vector<CropWindow> windows;  // per frame
};

// Frames must already be rescaled to the policy's rescale extent.
AugmentedClip apply_augmentation(const VideoClip& rescaled, const AugmentationDraw& draw,
                                 const AugmentationPolicy& policy, const NormalizationStats& stats);
AugmentedClip augment_video(const VideoClip& rescaled, const AugmentationPolicy& policy,
                            const NormalizationStats& stats, Rng& rng);

VideoClip rescale_clip(const VideoClip& clip, std::int64_t out_h, std::int64_t out_w);

struct EvalCrop {
  CropWindow window;
  bool flip = false;
};

// TL, TR, BL, BR, C at crop_size, then the same five flipped.
std::vector<EvalCrop> ten_crop_layout(std::int64_t height, std::int64_t width, std::int64_t crop_size);
// The 10 normalized crops of a rescaled clip, in ten_crop_layout order.
std::vector<VideoClip> ten_crop(const VideoClip& rescaled, const NormalizationStats& stats,
                                std::int64_t crop_size = 224);
VideoClip center_crop(const VideoClip& rescaled, const NormalizationStats& stats, std::int64_t crop_size = 224);

}  // namespace egolstm
