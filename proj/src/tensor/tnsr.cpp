#include "egolstm/tnsr.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace egolstm::tnsr {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("TNSR: truncated header");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <class T>
std::vector<std::uint8_t> encode_elements(std::span<const T> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(T));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) std::reverse(&bytes[i * sizeof(T)], &bytes[(i + 1) * sizeof(T)]);
  }
  return bytes;
}

template <class T>
std::vector<T> decode_elements(const std::vector<std::uint8_t>& bytes) {
  std::vector<T> values(bytes.size() / sizeof(T));
  std::vector<std::uint8_t> copy = bytes;
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) std::reverse(&copy[i * sizeof(T)], &copy[(i + 1) * sizeof(T)]);
  }
  std::memcpy(values.data(), copy.data(), values.size() * sizeof(T));
  return values;
}

}  // namespace

std::size_t element_size(StorageType type) {
  switch (type) {
    case StorageType::kFloat32:
      return 4;
    case StorageType::kFloat64:
      return 8;
    case StorageType::kUInt8:
      return 1;
  }
  throw FormatError("TNSR: unknown dtype code");
}

std::int64_t Record::numel() const {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void write(std::ostream& out, const Record& record) {
  if (record.shape.size() > 255) throw FormatError("TNSR: rank exceeds 255");
  if (static_cast<std::size_t>(record.numel()) * element_size(record.type) != record.payload.size()) {
    throw FormatError("TNSR: payload size does not match shape");
  }
  out.write(kMagic, 4);
  put_le<std::uint8_t>(out, kVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(record.type));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(record.shape.size()));
  put_le<std::uint8_t>(out, 0);
  for (auto e : record.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
  out.write(reinterpret_cast<const char*>(record.payload.data()), static_cast<std::streamsize>(record.payload.size()));
  if (!out) throw FormatError("TNSR: write failed");
}

Record read(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("TNSR: truncated header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("TNSR: bad magic");
  const auto version = get_le<std::uint8_t>(in);
  if (version != kVersion) throw FormatError("TNSR: unsupported version " + std::to_string(version));
  const auto code = get_le<std::uint8_t>(in);
  if (code < 1 || code > 3) throw FormatError("TNSR: unknown dtype code " + std::to_string(code));
  const auto ndim = get_le<std::uint8_t>(in);
  (void)get_le<std::uint8_t>(in);
  Record record;
  record.type = static_cast<StorageType>(code);
  std::uint64_t count = 1;
  for (std::uint8_t d = 0; d < ndim; ++d) {
    const auto e = get_le<std::uint64_t>(in);
    if (e == 0) throw FormatError("TNSR: zero extent");
    count *= e;
    if (count > kMaxElements) throw FormatError("TNSR: tensor too large");
    record.shape.push_back(static_cast<std::int64_t>(e));
  }
  record.payload.resize(count * element_size(record.type));
  if (!in.read(reinterpret_cast<char*>(record.payload.data()), static_cast<std::streamsize>(record.payload.size()))) {
    throw FormatError("TNSR: truncated payload");
  }
  return record;
}

std::vector<std::uint8_t> encode(const Record& record) {
  std::ostringstream os(std::ios::binary);
  write(os, record);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

Record decode(std::span<const std::uint8_t> bytes) {
  std::istringstream is(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read(is);
}

Record from_tensor(const Tensor& tensor) {
  Record record;
  record.shape = tensor.shape();
  if (tensor.dtype() == DType::kFloat32) {
    record.type = StorageType::kFloat32;
    record.payload = encode_elements(tensor.data<float>());
  } else {
    record.type = StorageType::kFloat64;
    record.payload = encode_elements(tensor.data<double>());
  }
  return record;
}

Tensor to_tensor(const Record& record) {
  switch (record.type) {
    case StorageType::kFloat32:
      return Tensor::from_buffer(record.shape, decode_elements<float>(record.payload));
    case StorageType::kFloat64:
      return Tensor::from_buffer(record.shape, decode_elements<double>(record.payload));
    case StorageType::kUInt8:
      return Tensor::from_buffer(record.shape, std::vector<float>(record.payload.begin(), record.payload.end()));
  }
  throw FormatError("TNSR: unknown dtype code");
}

Record from_text(std::string_view text) {
  Record record;
  record.type = StorageType::kUInt8;
  record.shape = {static_cast<std::int64_t>(std::max<std::size_t>(text.size(), 1))};
  record.payload.assign(text.begin(), text.end());
  // Extents must be positive, so empty text is stored as a single NUL.
  if (text.empty()) record.payload.push_back(0);
  return record;
}

std::string to_text(const Record& record) {
  if (record.type != StorageType::kUInt8) throw FormatError("TNSR: text record must be u8");
  std::string s(record.payload.begin(), record.payload.end());
  if (s.size() == 1 && s[0] == '\0') s.clear();
  return s;
}

void save(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write(out, from_tensor(tensor));
}

Record load_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return read(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor load(const std::filesystem::path& path) { return to_tensor(load_record(path)); }

}  // namespace egolstm::tnsr
