// Copyright 2026 The SIMS Steering Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sims {

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32(std::span<const std::uint8_t> data) noexcept;

// Little-endian encoder for the artifact formats.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_f64(double v);
  void put_bytes(std::span<const std::uint8_t> bytes);
  void put_string(std::string_view s);  // u32 length prefix
  void put_f32_array(std::span<const float> values);

  // Appends the CRC32 of everything written so far.
  void put_crc();

  const Bytes& bytes() const& noexcept { return buf_; }
  Bytes take() && noexcept { return std::move(buf_); }

 private:
  Bytes buf_;
};

// Bounds-checked little-endian decoder. Running past the end raises an
// artifact-format error ("truncated").
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  float get_f32();
  double get_f64();
  std::string get_string();
  void get_f32_array(std::span<float> out);
  std::span<const std::uint8_t> get_bytes(std::size_t n);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// Validates an 8-byte magic tag, a one-byte format version and the trailing
// CRC32, returning a reader positioned just after the version byte and
// limited to the payload (CRC excluded).
ByteReader open_artifact(std::span<const std::uint8_t> data, std::string_view magic,
                         std::uint8_t supported_version);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace sims
