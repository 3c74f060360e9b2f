#include "egolstm/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "egolstm/keyvalue.hpp"
#include "egolstm/rng.hpp"
#include "egolstm/tnsr.hpp"

namespace egolstm {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kClassesPrefix = "#classes:";

}  // namespace

void DatasetManifest::validate() const {
  if (class_names.empty()) throw std::invalid_argument("manifest has no class table");
  for (const auto& name : class_names) {
    if (name.empty()) throw std::invalid_argument("manifest class names must be non-empty");
  }
  for (const auto& e : entries) {
    if (e.label < 0 || e.label >= num_classes()) {
      throw std::invalid_argument("manifest entry `" + e.dir + "` has label " + std::to_string(e.label) +
                                  " outside [0, " + std::to_string(num_classes()) + ")");
    }
    if (e.frame_count < 3) throw std::invalid_argument("manifest entry `" + e.dir + "` has fewer than 3 frames");
  }
}

DatasetManifest parse_manifest(std::string_view text, fs::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  bool have_classes = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = kv::trim(raw);
    if (line.empty()) continue;
    const auto where = [&] { return "manifest line " + std::to_string(line_no) + ": "; };
    if (line.rfind(kClassesPrefix, 0) == 0) {
      if (have_classes) throw std::invalid_argument(where() + "duplicate class header");
      for (const auto& name : kv::split(std::string_view(line).substr(kClassesPrefix.size()), ';')) {
        m.class_names.push_back(kv::trim(name));
      }
      have_classes = true;
      continue;
    }
    if (line.front() == '#') continue;
    const auto fields = kv::split(line, ',');
    if (fields.size() != 3) throw std::invalid_argument(where() + "expected `relative_dir,label,frame_count`");
    ManifestEntry e;
    e.dir = kv::trim(fields[0]);
    if (e.dir.empty()) throw std::invalid_argument(where() + "empty directory");
    e.label = kv::to_int("label", kv::trim(fields[1]));
    e.frame_count = kv::to_int("frame_count", kv::trim(fields[2]));
    m.entries.push_back(std::move(e));
  }
  if (!have_classes) throw std::invalid_argument("manifest is missing the `#classes:` header");
  m.validate();
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << kClassesPrefix;
  for (std::size_t i = 0; i < m.class_names.size(); ++i) os << (i ? ";" : "") << m.class_names[i];
  os << '\n';
  for (const auto& e : m.entries) os << e.dir << ',' << e.label << ',' << e.frame_count << '\n';
  return os.str();
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << format_manifest(m);
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

std::string frame_file_name(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04lld.tnsr", static_cast<long long>(index));
  return buf;
}

namespace {

Tensor load_frame(const fs::path& path, DType dtype) {
  const tnsr::Record rec = tnsr::load_record(path);
  if (rec.shape.size() != 3 || rec.shape[0] != 3) {
    throw FormatError(path.string() + ": frame must be 3xHxW, got " + shape_string(rec.shape));
  }
  Tensor t = tnsr::to_tensor(rec);
  if (rec.type == tnsr::StorageType::kUInt8) {
    auto v = t.to_vector();
    for (auto& x : v) x /= 255.0;
    return Tensor::from_values(t.shape(), v, dtype);
  }
  return t.dtype() == dtype ? t : t.to(dtype);
}

}  // namespace

VideoClip load_frames(const fs::path& dir, std::int64_t count, DType dtype) {
  VideoClip clip;
  clip.source_id = dir.string();
  for (std::int64_t i = 0; i < count; ++i) {
    const fs::path p = dir / frame_file_name(i);
    if (!fs::exists(p)) throw FormatError("missing frame " + p.string());
    clip.frames.push_back(load_frame(p, dtype));
  }
  clip.validate();
  return clip;
}

VideoClip load_frames_dir(const fs::path& dir, DType dtype) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::map<long long, fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= 11 || name.rfind("frame_", 0) != 0 || name.substr(name.size() - 5) != ".tnsr") continue;
    const std::string digits = name.substr(6, name.size() - 11);
    if (!std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) continue;
    frames[std::stoll(digits)] = entry.path();
  }
  if (frames.empty()) throw FormatError("no frame_*.tnsr files in " + dir.string());
  VideoClip clip;
  clip.source_id = dir.string();
  for (const auto& [index, path] : frames) clip.frames.push_back(load_frame(path, dtype));
  clip.validate();
  return clip;
}

VideoClip load_clip(const DatasetManifest& manifest, const ManifestEntry& entry, DType dtype) {
  VideoClip clip = load_frames(manifest.root / entry.dir, entry.frame_count, dtype);
  clip.label = entry.label;
  clip.source_id = entry.dir;
  return clip;
}

std::pair<DatasetManifest, DatasetManifest> split_train_val(const DatasetManifest& manifest, double val_fraction) {
  if (val_fraction < 0 || val_fraction >= 1) throw std::invalid_argument("val fraction must lie in [0, 1)");
  DatasetManifest train{manifest.root, manifest.class_names, {}};
  DatasetManifest val{manifest.root, manifest.class_names, {}};
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const double u = static_cast<double>(splitmix64(i) >> 11) * 0x1.0p-53;
    (u < val_fraction ? val : train).entries.push_back(manifest.entries[i]);
  }
  return {train, val};
}

NormalizationStats compute_normalization_stats(const DatasetManifest& train, std::int64_t frames) {
  if (train.entries.empty()) throw std::invalid_argument("compute_normalization_stats: training manifest is empty");
  std::vector<VideoClip> clips;
  clips.reserve(train.entries.size());
  for (const auto& e : train.entries) {
    clips.push_back(sample_frames_equidistant(load_clip(train, e, DType::kFloat64), frames));
  }
  return compute_normalization_stats(clips);
}

}  // namespace egolstm
