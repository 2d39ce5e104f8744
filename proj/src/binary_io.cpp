// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#include "sims/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "sims/error.hpp"

namespace sims {

std::uint32_t crc32(std::span<const std::uint8_t> data) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; chunk to stay portable for large buffers.
  std::size_t off = 0;
  while (off < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, data.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_bytes(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::put_string(std::string_view s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::put_f32_array(std::span<const float> values) {
  for (float v : values) put_f32(v);
}

void ByteWriter::put_crc() { put_u32(crc32(buf_)); }

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw Error(ErrorKind::kArtifactFormat, "truncated input");
  }
}

std::uint8_t ByteReader::get_u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::get_u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::get_u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string ByteReader::get_string() {
  const std::uint32_t n = get_u32();
  auto raw = get_bytes(n);
  return std::string(raw.begin(), raw.end());
}

void ByteReader::get_f32_array(std::span<float> out) {
  need(out.size() * 4);
  for (float& v : out) v = get_f32();
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

ByteReader open_artifact(std::span<const std::uint8_t> data, std::string_view magic,
                         std::uint8_t supported_version) {
  constexpr std::size_t kCrcBytes = 4;
  if (data.size() < magic.size() + 1 + kCrcBytes) {
    throw Error(ErrorKind::kArtifactFormat, "truncated input");
  }
  if (std::memcmp(data.data(), magic.data(), magic.size()) != 0) {
    throw Error(ErrorKind::kArtifactFormat,
                "bad magic (expected \"" + std::string(magic) + "\")");
  }
  const std::uint8_t version = data[magic.size()];
  if (version != supported_version) {
    throw Error(ErrorKind::kUnsupportedVersion,
                "format version " + std::to_string(version) + ", reader supports " +
                    std::to_string(supported_version));
  }
  const auto body = data.first(data.size() - kCrcBytes);
  ByteReader tail(data.last(kCrcBytes));
  if (crc32(body) != tail.get_u32()) {
    throw Error(ErrorKind::kArtifactFormat, "CRC mismatch");
  }
  ByteReader reader(body);
  reader.get_bytes(magic.size() + 1);
  return reader;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace sims
