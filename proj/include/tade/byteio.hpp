// SPDX-License-Identifier: Apache-2.0
//
// Little-endian encoders for the on-disk formats, independent of host order.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "tade/error.hpp"

namespace tade::io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

/// Sequential reader over an in-memory buffer; throws SchemaError on overrun.
class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}

  std::string_view take(std::size_t n) {
    if (n > buf_.size() - pos_) throw SchemaError("unexpected end of file");
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(s[i])} << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(s[i])} << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: truncates and replaces. Throws
/// IoError if the file cannot be opened or written.
void write_file(const std::filesystem::path& path, std::string_view contents);
void append_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace tade::io
