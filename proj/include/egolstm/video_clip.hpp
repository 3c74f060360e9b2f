#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "egolstm/tensor.hpp"

namespace egolstm {

// Decoded frame sequence. Every frame is [3,H,W]; values lie in [0,1] until
// normalization is applied.
struct VideoClip {
  std::vector<Tensor> frames;
  std::optional<std::int64_t> label;
  std::string source_id;

  std::int64_t length() const { return static_cast<std::int64_t>(frames.size()); }
  // Throws unless the clip is non-empty and all frames share one [3,H,W] shape.
  void validate() const;
  VideoClip to(DType dtype) const;
};

}  // namespace egolstm
