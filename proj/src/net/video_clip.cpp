#include "egolstm/video_clip.hpp"

#include <stdexcept>

namespace egolstm {

void VideoClip::validate() const {
  if (frames.empty()) throw std::invalid_argument("VideoClip `" + source_id + "` has no frames");
  const Tensor& first = frames.front();
  if (first.dim() != 3 || first.size(0) != 3) {
    throw ShapeError("VideoClip `" + source_id + "`: frames must be [3,H,W], got " + shape_string(first.shape()));
  }
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (frames[t].shape() != first.shape()) {
      throw ShapeError("VideoClip `" + source_id + "`: frame " + std::to_string(t) + " has shape " +
                       shape_string(frames[t].shape()) + ", expected " + shape_string(first.shape()));
    }
  }
}

VideoClip VideoClip::to(DType dtype) const {
  VideoClip out{{}, label, source_id};
  out.frames.reserve(frames.size());
  for (const auto& f : frames) out.frames.push_back(f.dtype() == dtype ? f : f.to(dtype));
  return out;
}

}  // namespace egolstm
