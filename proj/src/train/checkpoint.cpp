#include "egolstm/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "egolstm/keyvalue.hpp"
#include "egolstm/tnsr.hpp"

namespace egolstm {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'C', 'L', 'C', 'K'};
constexpr std::string_view kOptimPrefix = "optim.v.";

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError(std::string("CLCK: truncated ") + what);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return value;
}

std::string join_lines(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) s += (i ? "\n" : "") + names[i];
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, tnsr::Record>> records;
  records.emplace_back("meta.model_config", tnsr::from_text(ckpt.model.to_text()));
  records.emplace_back("meta.train_config", tnsr::from_text(ckpt.train.to_text()));
  records.emplace_back("meta.class_names", tnsr::from_text(join_lines(ckpt.class_names)));
  records.emplace_back("norm_stats", tnsr::from_tensor(ckpt.stats.to_tensor()));
  for (const auto& p : ckpt.params) records.emplace_back(p.name, tnsr::from_tensor(p.tensor));
  for (const auto& v : ckpt.optimizer_state) records.emplace_back(std::string(kOptimPrefix) + v.name, tnsr::from_tensor(v.tensor));

  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  put_le<std::uint8_t>(out, Checkpoint::kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, record] : records) {
    if (name.size() > 0xFFFF) throw std::invalid_argument("CLCK: record name too long");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    tnsr::write(out, record);
  }
  put_le<std::uint64_t>(out, ckpt.iteration);
  put_le<std::uint64_t>(out, ckpt.seed);
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("CLCK: truncated header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("CLCK: bad magic (not a checkpoint)");
  const auto version = get_le<std::uint8_t>(in, "header");
  if (version != Checkpoint::kVersion) throw FormatError("CLCK: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(in, "header");

  Checkpoint ckpt;
  std::map<std::string, tnsr::Record> meta;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(in, "record name");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("CLCK: truncated record name");
    if (!seen.insert(name).second) throw FormatError("CLCK: duplicate record `" + name + "`");
    tnsr::Record record = tnsr::read(in);
    if (name.rfind("meta.", 0) == 0 || name == "norm_stats") {
      meta[name] = std::move(record);
    } else if (name.rfind(kOptimPrefix, 0) == 0) {
      ckpt.optimizer_state.push_back({name.substr(kOptimPrefix.size()), tnsr::to_tensor(record)});
    } else {
      ckpt.params.push_back({name, tnsr::to_tensor(record)});
    }
  }
  ckpt.iteration = get_le<std::uint64_t>(in, "trailer");
  ckpt.seed = get_le<std::uint64_t>(in, "trailer");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("CLCK: trailing bytes after trailer");

  for (const char* key : {"meta.model_config", "meta.train_config", "meta.class_names", "norm_stats"}) {
    if (!meta.count(key)) throw FormatError(std::string("CLCK: missing record `") + key + "`");
  }
  ckpt.model = ModelConfig::from_text(tnsr::to_text(meta["meta.model_config"]));
  ckpt.train = TrainConfig::from_text(tnsr::to_text(meta["meta.train_config"]));
  const std::string names = tnsr::to_text(meta["meta.class_names"]);
  ckpt.class_names = names.empty() ? std::vector<std::string>{} : kv::split(names, '\n');
  ckpt.stats = NormalizationStats::from_tensor(tnsr::to_tensor(meta["norm_stats"]));
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

InteractionNet build_net(const Checkpoint& ckpt, DType dtype) {
  InteractionNet net(ckpt.model, dtype);
  net.load_parameters(ckpt.params);
  return net;
}

std::vector<std::string> import_weights(InteractionNet& net, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("weight directory not found: " + dir.string());
  std::vector<std::string> imported;
  for (auto& p : net.named_parameters()) {
    const fs::path file = dir / (p.name + ".tnsr");
    if (!fs::exists(file)) continue;
    const Tensor value = tnsr::load(file);
    if (value.shape() != p.tensor.shape()) {
      throw ShapeError("imported `" + p.name + "` has shape " + shape_string(value.shape()) + ", expected " +
                       shape_string(p.tensor.shape()));
    }
    p.tensor.assign(value);
    imported.push_back(p.name);
  }
  return imported;
}

}  // namespace egolstm
