#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egolstm/frames.hpp"
#include "egolstm/model.hpp"
#include "egolstm/train_config.hpp"

namespace egolstm {

// Container layout (little-endian): "CLCK" | version u8 | u32 tensor count |
// count x (u16 name length | UTF-8 name | TNSR record) | u64 iteration | u64 seed.
//
// Reserved record names: meta.model_config, meta.train_config and
// meta.class_names (u8 text), norm_stats (f64 2x3), optim.v.<param> for the
// RMSProp square averages. Every other record is a model parameter.
struct Checkpoint {
  static constexpr std::uint8_t kVersion = 1;

  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> class_names;
  NormalizationStats stats;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer_state;  // same names as params
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Network with the checkpoint's configuration and parameter values.
InteractionNet build_net(const Checkpoint& checkpoint, DType dtype = DType::kFloat32);

// Copies `<dir>/<param name>.tnsr` into every parameter that has one; returns
// the names imported. Shapes must match.
std::vector<std::string> import_weights(InteractionNet& net, const std::filesystem::path& dir);

}  // namespace egolstm
