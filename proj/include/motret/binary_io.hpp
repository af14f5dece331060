// Copyright 2026 The motret Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte-level encoding shared by every container format.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace motret::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f32s(std::span<const float> values);
  void bytes(std::string_view s);
  /// u16 length prefix followed by the raw UTF-8 bytes.
  void short_string(std::string_view s);

  const std::vector<std::uint8_t>& data() const { return buf_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader. Every read names the field it is decoding so that
/// a truncated or corrupt file produces a precise FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data)
      : buf_(std::move(data)) {}
  static ByteReader from_file(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint16_t u16(std::string_view field);
  std::uint32_t u32(std::string_view field);
  float f32(std::string_view field);
  void f32s(std::span<float> out, std::string_view field);
  std::string bytes(std::size_t n, std::string_view field);
  std::string short_string(std::string_view field);

  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_end(std::string_view what) const;

 private:
  void need(std::size_t n, std::string_view field) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace motret::io
