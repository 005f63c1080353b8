#include "gwlz/byte_io.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <fmt/core.h>
#include <zlib.h>

#include "gwlz/error.hpp"

namespace gwlz {

void ByteWriter::put_bytes(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::put_tag(std::string_view tag) {
  for (char c : tag) buf_.push_back(static_cast<std::uint8_t>(c));
}

void ByteReader::require(std::uint64_t n) const {
  if (n > remaining())
    throw FormatError(fmt::format("truncated stream: need {} bytes at offset {}, {} left", n, pos_, remaining()));
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::uint64_t n) {
  require(n);
  auto out = bytes_.subspan(pos_, static_cast<std::size_t>(n));
  pos_ += static_cast<std::size_t>(n);
  return out;
}

std::span<const std::uint8_t> ByteReader::get_section() {
  const std::uint64_t n = get_u64();
  return get_bytes(n);
}

void ByteReader::expect_tag(std::string_view tag, std::string_view what) {
  auto got = get_bytes(tag.size());
  if (!std::equal(tag.begin(), tag.end(), got.begin(), [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
    throw FormatError(fmt::format("not a {} (bad magic)", what));
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large inputs.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void seal_with_crc(ByteWriter& w) { w.put_u32(crc32(w.bytes())); }

std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> bytes, std::string_view what) {
  if (bytes.size() < 4) throw FormatError(fmt::format("truncated {}: {} bytes", what, bytes.size()));
  auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  const std::uint32_t stored = tail.get_u32();
  const std::uint32_t actual = crc32(body);
  if (stored != actual)
    throw CorruptionError(fmt::format("{} checksum mismatch (stored {:08x}, computed {:08x})", what, stored, actual));
  return body;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw IoError(fmt::format("read failed on '{}'", path.string()));
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError(fmt::format("write failed on '{}'", path.string()));
}

}  // namespace gwlz
