#include "vea/data/idx.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <limits>

namespace vea::data {

std::size_t dtype_size(IdxDtype dtype) {
  switch (dtype) {
    case IdxDtype::U8:
    case IdxDtype::I8: return 1;
    case IdxDtype::I16: return 2;
    case IdxDtype::I32:
    case IdxDtype::F32: return 4;
    case IdxDtype::F64: return 8;
  }
  throw std::invalid_argument("unknown IDX dtype");
}

std::string to_string(IdxDtype dtype) {
  switch (dtype) {
    case IdxDtype::U8: return "u8";
    case IdxDtype::I8: return "i8";
    case IdxDtype::I16: return "i16";
    case IdxDtype::I32: return "i32";
    case IdxDtype::F32: return "f32";
    case IdxDtype::F64: return "f64";
  }
  return "?";
}

std::string to_string(IdxErrorKind kind) {
  switch (kind) {
    case IdxErrorKind::BadMagic: return "bad magic";
    case IdxErrorKind::UnknownDtype: return "unknown dtype";
    case IdxErrorKind::Truncated: return "truncated";
    case IdxErrorKind::TrailingData: return "trailing data";
  }
  return "?";
}

IdxError::IdxError(IdxErrorKind kind, std::size_t offset, const std::string& detail)
    : DataError("IDX " + to_string(kind) + " at byte offset " + std::to_string(offset) + ": " + detail),
      kind_(kind),
      offset_(offset) {}

namespace {

bool known_dtype(std::uint8_t code) {
  switch (code) {
    case 0x08: case 0x09: case 0x0B: case 0x0C: case 0x0D: case 0x0E: return true;
    default: return false;
  }
}

std::uint64_t read_be(const std::uint8_t* p, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::size_t IdxArray::count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

double IdxArray::value(std::size_t index) const {
  const std::size_t width = dtype_size(dtype);
  if ((index + 1) * width > payload.size()) throw std::out_of_range("IDX element index out of range");
  const std::uint64_t bits = read_be(payload.data() + index * width, width);
  switch (dtype) {
    case IdxDtype::U8: return static_cast<double>(bits);
    case IdxDtype::I8: return static_cast<std::int8_t>(bits);
    case IdxDtype::I16: return static_cast<std::int16_t>(bits);
    case IdxDtype::I32: return static_cast<std::int32_t>(bits);
    case IdxDtype::F32: return std::bit_cast<float>(static_cast<std::uint32_t>(bits));
    case IdxDtype::F64: return std::bit_cast<double>(bits);
  }
  return 0.0;
}

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IdxError(IdxErrorKind::Truncated, bytes.size(), "header needs 4 bytes");
  for (std::size_t i = 0; i < 2; ++i) {
    if (bytes[i] != 0) throw IdxError(IdxErrorKind::BadMagic, i, "expected 0x00");
  }
  if (!known_dtype(bytes[2])) {
    throw IdxError(IdxErrorKind::UnknownDtype, 2, "code " + std::to_string(bytes[2]));
  }
  IdxArray out;
  out.dtype = static_cast<IdxDtype>(bytes[2]);
  const std::size_t ndims = bytes[3];
  std::size_t offset = 4;
  if (bytes.size() < offset + 4 * ndims) {
    throw IdxError(IdxErrorKind::Truncated, bytes.size(),
                   "header declares " + std::to_string(ndims) + " dimensions");
  }
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d, offset += 4) {
    const auto size = static_cast<std::uint32_t>(read_be(bytes.data() + offset, 4));
    out.dims.push_back(size);
    if (size != 0 && count > std::numeric_limits<std::size_t>::max() / size) {
      throw IdxError(IdxErrorKind::Truncated, offset, "dimension product overflows");
    }
    count *= size;
  }
  const std::size_t width = dtype_size(out.dtype);
  const std::size_t available = bytes.size() - offset;
  if (count > available / width) {
    throw IdxError(IdxErrorKind::Truncated, bytes.size(),
                   "payload needs " + std::to_string(count * width) + " bytes, found " + std::to_string(available));
  }
  const std::size_t length = count * width;
  if (available > length) {
    throw IdxError(IdxErrorKind::TrailingData, offset + length,
                   std::to_string(available - length) + " bytes after payload");
  }
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return out;
}

std::vector<std::uint8_t> encode_idx(const IdxArray& array) {
  if (array.dims.size() > 255) throw std::invalid_argument("IDX supports at most 255 dimensions");
  if (array.payload.size() != array.count() * dtype_size(array.dtype)) {
    throw std::invalid_argument("IDX payload size does not match dims");
  }
  std::vector<std::uint8_t> out{0, 0, static_cast<std::uint8_t>(array.dtype),
                                static_cast<std::uint8_t>(array.dims.size())};
  for (std::uint32_t d : array.dims) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(d >> shift));
  }
  out.insert(out.end(), array.payload.begin(), array.payload.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (!file) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buffer[1 << 16];
  int got = 0;
  while ((got = gzread(file, buffer, sizeof buffer)) > 0) out.insert(out.end(), buffer, buffer + got);
  int code = Z_OK;
  const std::string message = got < 0 ? gzerror(file, &code) : "";
  gzclose(file);
  if (got < 0) throw DataError("cannot read " + path.string() + ": " + message);
  return out;
}

IdxArray load_idx_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_idx(bytes);
  } catch (const IdxError& e) {
    throw IdxError(e.kind(), e.offset(), path.string());
  }
}

}  // namespace vea::data
