#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vea::data {

/// Base class for every dataset loading failure.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class IdxDtype : std::uint8_t { U8 = 0x08, I8 = 0x09, I16 = 0x0B, I32 = 0x0C, F32 = 0x0D, F64 = 0x0E };

std::size_t dtype_size(IdxDtype dtype);
std::string to_string(IdxDtype dtype);

enum class IdxErrorKind { BadMagic, UnknownDtype, Truncated, TrailingData };

std::string to_string(IdxErrorKind kind);

class IdxError : public DataError {
 public:
  IdxError(IdxErrorKind kind, std::size_t offset, const std::string& detail);

  IdxErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  IdxErrorKind kind_;
  std::size_t offset_;
};

/// Decoded IDX file. The payload is kept in its on-disk big-endian layout.
struct IdxArray {
  IdxDtype dtype = IdxDtype::U8;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t count() const;
  double value(std::size_t index) const;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx(const IdxArray& array);

/// Reads a whole file, inflating it first when it is gzip-compressed.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

IdxArray load_idx_file(const std::filesystem::path& path);

}  // namespace vea::data
