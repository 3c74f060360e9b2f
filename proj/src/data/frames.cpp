#include "egolstm/frames.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "egolstm/tnsr.hpp"

namespace egolstm {

namespace {

void check_frame(const Tensor& frame, const char* op) {
  if (frame.dim() != 3) throw ShapeError(std::string(op) + ": frame must be [C,H,W], got " + shape_string(frame.shape()));
}

}  // namespace

std::vector<std::int64_t> equidistant_indices(std::int64_t n, std::int64_t t) {
  if (n < 1) throw std::invalid_argument("equidistant sampling of an empty clip");
  if (t < 1) throw std::invalid_argument("equidistant sampling needs T >= 1");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(t));
  if (n >= t) {
    for (std::int64_t i = 0; i < t; ++i) {
      // Integer form of round(i*(n-1)/(t-1)) with halves rounded up.
      idx[static_cast<std::size_t>(i)] = t == 1 ? 0 : (2 * i * (n - 1) + (t - 1)) / (2 * (t - 1));
    }
  } else {
    for (std::int64_t i = 0; i < t; ++i) idx[static_cast<std::size_t>(i)] = std::min(i, n - 1);
  }
  return idx;
}

VideoClip sample_frames_equidistant(const VideoClip& clip, std::int64_t t) {
  VideoClip out{{}, clip.label, clip.source_id};
  for (auto i : equidistant_indices(clip.length(), t)) out.frames.push_back(clip.frames[static_cast<std::size_t>(i)]);
  return out;
}

Tensor rescale(const Tensor& frame, std::int64_t out_h, std::int64_t out_w) {
  check_frame(frame, "rescale");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("rescale: output extents must be positive");
  const std::int64_t c = frame.size(0), h = frame.size(1), w = frame.size(2);
  if (h == out_h && w == out_w) return frame.detach();

  struct Tap {
    std::int64_t i0, i1;
    double t;
  };
  auto taps = [](std::int64_t in, std::int64_t out) {
    std::vector<Tap> v(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
      const double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::int64_t>(std::floor(s));
      v[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    }
    return v;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);

  return dispatch(frame.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = frame.data<T>();
    std::vector<T> dst(static_cast<std::size_t>(c * out_h * out_w));
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* plane = src.data() + ch * h * w;
      T* out = dst.data() + ch * out_h * out_w;
      for (std::int64_t y = 0; y < out_h; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        const T* r0 = plane + a.i0 * w;
        const T* r1 = plane + a.i1 * w;
        for (std::int64_t x = 0; x < out_w; ++x) {
          const Tap& b = tx[static_cast<std::size_t>(x)];
          const double top = r0[b.i0] + b.t * (r0[b.i1] - r0[b.i0]);
          const double bottom = r1[b.i0] + b.t * (r1[b.i1] - r1[b.i0]);
          out[y * out_w + x] = static_cast<T>(top + a.t * (bottom - top));
        }
      }
    }
    return Tensor::from_buffer({c, out_h, out_w}, std::move(dst));
  });
}

const char* to_string(CropPosition position) {
  switch (position) {
    case CropPosition::kTopLeft: return "TL";
    case CropPosition::kTopRight: return "TR";
    case CropPosition::kBottomLeft: return "BL";
    case CropPosition::kBottomRight: return "BR";
    case CropPosition::kCenter: return "C";
  }
  return "?";
}

CropWindow crop_window(std::int64_t height, std::int64_t width, std::int64_t size, CropPosition position) {
  if (size <= 0 || size > height || size > width) {
    throw ShapeError("crop size " + std::to_string(size) + " exceeds frame " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  switch (position) {
    case CropPosition::kTopLeft: return {0, 0, size};
    case CropPosition::kTopRight: return {0, width - size, size};
    case CropPosition::kBottomLeft: return {height - size, 0, size};
    case CropPosition::kBottomRight: return {height - size, width - size, size};
    case CropPosition::kCenter: return {(height - size) / 2, (width - size) / 2, size};
  }
  throw std::invalid_argument("unknown crop position");
}

Tensor crop(const Tensor& frame, const CropWindow& win) {
  check_frame(frame, "crop");
  const std::int64_t c = frame.size(0), h = frame.size(1), w = frame.size(2);
  if (win.row < 0 || win.col < 0 || win.size <= 0 || win.row + win.size > h || win.col + win.size > w) {
    throw ShapeError("crop window outside frame " + shape_string(frame.shape()));
  }
  return dispatch(frame.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = frame.data<T>();
    std::vector<T> dst(static_cast<std::size_t>(c * win.size * win.size));
    T* out = dst.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < win.size; ++y) {
        const T* row = src.data() + (ch * h + win.row + y) * w + win.col;
        out = std::copy(row, row + win.size, out);
      }
    }
    return Tensor::from_buffer({c, win.size, win.size}, std::move(dst));
  });
}

Tensor scale_jitter_crop(const Tensor& frame, std::int64_t size, CropPosition position, std::int64_t out_size) {
  check_frame(frame, "scale_jitter_crop");
  const Tensor cropped = crop(frame, crop_window(frame.size(1), frame.size(2), size, position));
  return rescale(cropped, out_size, out_size);
}

Tensor horizontal_flip(const Tensor& frame) {
  check_frame(frame, "horizontal_flip");
  const std::int64_t c = frame.size(0), h = frame.size(1), w = frame.size(2);
  return dispatch(frame.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = frame.data<T>();
    std::vector<T> dst(src.begin(), src.end());
    for (std::int64_t r = 0; r < c * h; ++r) std::reverse(dst.begin() + r * w, dst.begin() + (r + 1) * w);
    return Tensor::from_buffer({c, h, w}, std::move(dst));
  });
}

// ---------------------------------------------------------------------------

void NormalizationStats::validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(mean[c]) || !std::isfinite(std[c])) throw NumericError("normalization stats are not finite");
    if (!(std[c] > 0)) throw NumericError("channel " + std::to_string(c) + " has zero standard deviation");
  }
}

Tensor NormalizationStats::to_tensor() const {
  return Tensor::from_values({2, 3}, {mean[0], mean[1], mean[2], std[0], std[1], std[2]}, DType::kFloat64);
}

NormalizationStats NormalizationStats::from_tensor(const Tensor& t) {
  if (t.shape() != Shape{2, 3}) throw FormatError("normalization stats must be 2x3, got " + shape_string(t.shape()));
  NormalizationStats s;
  for (int c = 0; c < 3; ++c) {
    s.mean[c] = t.value(c);
    s.std[c] = t.value(3 + c);
  }
  s.validate();
  return s;
}

void NormalizationStats::save(const std::filesystem::path& path) const { tnsr::save(path, to_tensor()); }

NormalizationStats NormalizationStats::load(const std::filesystem::path& path) {
  return from_tensor(tnsr::load(path));
}

Tensor normalize(const Tensor& frame, const NormalizationStats& stats) {
  check_frame(frame, "normalize");
  if (frame.size(0) != 3) throw ShapeError("normalize: frame must have 3 channels");
  const std::int64_t plane = frame.size(1) * frame.size(2);
  return dispatch(frame.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = frame.data<T>();
    std::vector<T> dst(src.size());
    for (std::int64_t c = 0; c < 3; ++c) {
      const double m = stats.mean[static_cast<std::size_t>(c)];
      const double inv = 1.0 / stats.std[static_cast<std::size_t>(c)];
      for (std::int64_t i = c * plane; i < (c + 1) * plane; ++i) {
        dst[static_cast<std::size_t>(i)] = static_cast<T>((src[static_cast<std::size_t>(i)] - m) * inv);
      }
    }
    return Tensor::from_buffer(frame.shape(), std::move(dst));
  });
}

NormalizationStats compute_normalization_stats(const std::vector<VideoClip>& clips) {
  std::array<double, 3> sum{}, count{};
  auto each_channel = [&](auto&& fn) {
    for (const auto& clip : clips) {
      for (const auto& f : clip.frames) {
        check_frame(f, "compute_normalization_stats");
        if (f.size(0) != 3) throw ShapeError("compute_normalization_stats: frames must have 3 channels");
        const std::int64_t plane = f.size(1) * f.size(2);
        const auto values = f.to_vector();
        for (std::size_t c = 0; c < 3; ++c) {
          fn(c, values.data() + c * static_cast<std::size_t>(plane), plane);
        }
      }
    }
  };
  each_channel([&](std::size_t c, const double* v, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) sum[c] += v[i];
    count[c] += static_cast<double>(n);
  });
  if (count[0] == 0) throw std::invalid_argument("compute_normalization_stats: no training frames");
  NormalizationStats s;
  for (std::size_t c = 0; c < 3; ++c) s.mean[c] = sum[c] / count[c];
  std::array<double, 3> sq{};
  each_channel([&](std::size_t c, const double* v, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = v[i] - s.mean[c];
      sq[c] += d * d;
    }
  });
  for (std::size_t c = 0; c < 3; ++c) s.std[c] = std::sqrt(sq[c] / count[c]);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

AugmentationPolicy AugmentationPolicy::for_input_size(std::int64_t input_size) {
  AugmentationPolicy p;
  if (input_size == p.output_size) return p;
  const double r = static_cast<double>(input_size) / 224.0;
  auto scaled = [r](std::int64_t v) { return static_cast<std::int64_t>(std::lround(static_cast<double>(v) * r)); };
  p.rescale_h = scaled(p.rescale_h);
  p.rescale_w = scaled(p.rescale_w);
  for (auto& s : p.crop_sizes) s = scaled(s);
  p.output_size = input_size;
  p.validate();
  return p;
}

void AugmentationPolicy::validate() const {
  if (rescale_h <= 0 || rescale_w <= 0 || output_size <= 0) throw std::invalid_argument("augmentation extents must be positive");
  if (crop_sizes.empty()) throw std::invalid_argument("augmentation needs at least one crop size");
  for (auto s : crop_sizes) {
    if (s <= 0 || s > std::min(rescale_h, rescale_w)) {
      throw std::invalid_argument("crop size " + std::to_string(s) + " does not fit the rescaled frame");
    }
  }
  if (flip_probability < 0 || flip_probability > 1) throw std::invalid_argument("flip probability must lie in [0,1]");
}

AugmentationDraw draw_augmentation(const AugmentationPolicy& policy, Rng& rng) {
  AugmentationDraw d;
  d.size = policy.crop_sizes[rng.below(policy.crop_sizes.size())];
  d.position = kCropPositions[rng.below(kCropPositions.size())];
  d.flip = rng.bernoulli(policy.flip_probability);
  return d;
}

AugmentedClip apply_augmentation(const VideoClip& rescaled, const AugmentationDraw& draw,
                                 const AugmentationPolicy& policy, const NormalizationStats& stats) {
  rescaled.validate();
  const Tensor& first = rescaled.frames.front();
  if (first.size(1) != policy.rescale_h || first.size(2) != policy.rescale_w) {
    throw ShapeError("augment: frames are " + std::to_string(first.size(1)) + "x" + std::to_string(first.size(2)) +
                     ", policy expects " + std::to_string(policy.rescale_h) + "x" + std::to_string(policy.rescale_w));
  }
  AugmentedClip out{{{}, rescaled.label, rescaled.source_id}, draw, {}};
  for (const auto& f : rescaled.frames) {
    const CropWindow win = crop_window(f.size(1), f.size(2), draw.size, draw.position);
    Tensor x = rescale(crop(f, win), policy.output_size, policy.output_size);
    if (draw.flip) x = horizontal_flip(x);
    out.clip.frames.push_back(normalize(x, stats));
    out.windows.push_back(win);
  }
  return out;
}

AugmentedClip augment_video(const VideoClip& rescaled, const AugmentationPolicy& policy,
                            const NormalizationStats& stats, Rng& rng) {
  return apply_augmentation(rescaled, draw_augmentation(policy, rng), policy, stats);
}

VideoClip rescale_clip(const VideoClip& clip, std::int64_t out_h, std::int64_t out_w) {
  VideoClip out{{}, clip.label, clip.source_id};
  out.frames.reserve(clip.frames.size());
  for (const auto& f : clip.frames) out.frames.push_back(rescale(f, out_h, out_w));
  return out;
}

std::vector<EvalCrop> ten_crop_layout(std::int64_t height, std::int64_t width, std::int64_t crop_size) {
  std::vector<EvalCrop> layout;
  for (bool flip : {false, true}) {
    for (auto pos : kCropPositions) layout.push_back({crop_window(height, width, crop_size, pos), flip});
  }
  return layout;
}

namespace {

VideoClip apply_eval_crop(const VideoClip& clip, const EvalCrop& c, const NormalizationStats& stats) {
  VideoClip out{{}, clip.label, clip.source_id};
  for (const auto& f : clip.frames) {
    Tensor x = crop(f, c.window);
    if (c.flip) x = horizontal_flip(x);
    out.frames.push_back(normalize(x, stats));
  }
  return out;
}

}  // namespace

std::vector<VideoClip> ten_crop(const VideoClip& rescaled, const NormalizationStats& stats, std::int64_t crop_size) {
  rescaled.validate();
  const Tensor& first = rescaled.frames.front();
  std::vector<VideoClip> out;
  for (const auto& c : ten_crop_layout(first.size(1), first.size(2), crop_size)) {
    out.push_back(apply_eval_crop(rescaled, c, stats));
  }
  return out;
}

VideoClip center_crop(const VideoClip& rescaled, const NormalizationStats& stats, std::int64_t crop_size) {
  rescaled.validate();
  const Tensor& first = rescaled.frames.front();
  const EvalCrop c{crop_window(first.size(1), first.size(2), crop_size, CropPosition::kCenter), false};
  return apply_eval_crop(rescaled, c, stats);
}

}  // namespace egolstm
