#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "egolstm/frames.hpp"
#include "egolstm/video_clip.hpp"

namespace egolstm {

struct ManifestEntry {
  std::string dir;  // relative to the manifest root
  std::int64_t label = 0;
  std::int64_t frame_count = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// On disk: `#classes:name0;name1;...` followed by `relative_dir,label,frame_count`
// lines. The root is the directory holding the manifest file.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;

  std::int64_t num_classes() const { return static_cast<std::int64_t>(class_names.size()); }
  // Labels in [0, K), frame counts >= 3, at least one class.
  void validate() const;
};

DatasetManifest parse_manifest(std::string_view text, std::filesystem::path root);
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string frame_file_name(std::int64_t index);  // frame_%04d.tnsr
// Loads frame_0000.tnsr .. frame_{count-1}.tnsr. f32/f64 frames are taken as
// is; u8 frames are divided by 255.
VideoClip load_frames(const std::filesystem::path& dir, std::int64_t count, DType dtype = DType::kFloat32);
// Every frame_*.tnsr in the directory, in index order.
VideoClip load_frames_dir(const std::filesystem::path& dir, DType dtype = DType::kFloat32);
VideoClip load_clip(const DatasetManifest& manifest, const ManifestEntry& entry, DType dtype = DType::kFloat32);

// Deterministic split by hashed entry index: an entry goes to validation when
// its hash falls in the lowest `val_fraction` of the range.
std::pair<DatasetManifest, DatasetManifest> split_train_val(const DatasetManifest& manifest, double val_fraction);

// Statistics over the `frames` equidistant frames of every training video at
// native resolution.
NormalizationStats compute_normalization_stats(const DatasetManifest& train, std::int64_t frames = 20);

}  // namespace egolstm
