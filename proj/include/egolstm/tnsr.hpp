#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "egolstm/tensor.hpp"

// TNSR record layout (all integers little-endian):
//   "TNSR" | version u8 = 1 | dtype u8 (1=f32, 2=f64, 3=u8) | ndim u8 | pad u8
//   | ndim x u64 extents | row-major payload
namespace egolstm::tnsr {

inline constexpr std::uint8_t kVersion = 1;

enum class StorageType : std::uint8_t { kFloat32 = 1, kFloat64 = 2, kUInt8 = 3 };

std::size_t element_size(StorageType type);

struct Record {
  StorageType type = StorageType::kFloat64;
  Shape shape;
  std::vector<std::uint8_t> payload;  // little-endian element bytes

  std::int64_t numel() const;
};

void write(std::ostream& out, const Record& record);
Record read(std::istream& in);

std::vector<std::uint8_t> encode(const Record& record);
Record decode(std::span<const std::uint8_t> bytes);

Record from_tensor(const Tensor& tensor);
// u8 payloads become f32 tensors holding the raw byte values.
Tensor to_tensor(const Record& record);

// 1-D u8 record holding UTF-8 text.
Record from_text(std::string_view text);
std::string to_text(const Record& record);

void save(const std::filesystem::path& path, const Tensor& tensor);
Tensor load(const std::filesystem::path& path);
Record load_record(const std::filesystem::path& path);

}  // namespace egolstm::tnsr
