#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "egolstm/model.hpp"
#include "egolstm/optim.hpp"

namespace egolstm {

struct TrainConfig {
  std::string preset = "full";
  InputMode input_mode = InputMode::kRawFrames;
  double lr = 1e-5;
  std::int64_t batch_size = 12;
  std::int64_t iterations = 10000;
  double rho = 0.99;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t frames = 20;      // equidistant frames per clip
  std::int64_t eval_every = 0;   // validation accuracy period; 0 disables
  double val_split = 0.0;        // hashed validation fraction of the manifest

  // Preset-specific defaults: 10,000 iterations for full, 2,000 for tiny.
  static TrainConfig defaults_for(std::string_view preset);
  void validate() const;
  RmsPropOptions optimizer() const { return {lr, rho, eps}; }

  std::string to_text() const;
  static TrainConfig from_text(std::string_view text);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace egolstm
