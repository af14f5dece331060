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

#include "motret/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "motret/errors.hpp"

namespace motret::io {

void ByteWriter::magic(std::string_view tag) { bytes(tag); }

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int s = 0; s < 32; s += 8)
    buf_.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f32s(std::span<const float> values) {
  buf_.reserve(buf_.size() + values.size() * 4);
  for (float v : values) f32(v);
}

void ByteWriter::bytes(std::string_view s) {
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::short_string(std::string_view s) {
  if (s.size() > 0xffff)
    throw InvalidArgument("identifier longer than 65535 bytes");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

void ByteWriter::write_file(const std::filesystem::path& path) const {
  io::write_file(path, buf_);
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
  return ByteReader(read_file(path));
}

void ByteReader::need(std::size_t n, std::string_view field) const {
  if (buf_.size() - pos_ < n)
    throw FormatError("truncated input while reading " + std::string(field));
}

void ByteReader::expect_magic(std::string_view tag) {
  need(tag.size(), "magic");
  if (std::memcmp(buf_.data() + pos_, tag.data(), tag.size()) != 0)
    throw FormatError("bad magic: expected \"" + std::string(tag) + "\"");
  pos_ += tag.size();
}

std::uint16_t ByteReader::u16(std::string_view field) {
  need(2, field);
  const auto v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32(std::string_view field) {
  need(4, field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

float ByteReader::f32(std::string_view field) {
  return std::bit_cast<float>(u32(field));
}

void ByteReader::f32s(std::span<float> out, std::string_view field) {
  need(out.size() * 4, field);
  for (float& v : out) v = f32(field);
}

std::string ByteReader::bytes(std::size_t n, std::string_view field) {
  need(n, field);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::short_string(std::string_view field) {
  const std::uint16_t n = u16(field);
  return bytes(n, field);
}

void ByteReader::expect_end(std::string_view what) const {
  if (remaining() != 0)
    throw FormatError(std::string(what) + ": " + std::to_string(remaining()) +
                      " trailing bytes after payload");
}

}  // namespace motret::io
