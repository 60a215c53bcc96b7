// SPDX-License-Identifier: Apache-2.0
// Little-endian byte buffer helpers shared by the AVF1 and AVW1 formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>

#include "avjoint/error.hpp"

namespace avjoint::binio {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
 public:
  template <typename V>
  void put(V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    char tmp[sizeof(V)];
    std::memcpy(tmp, &v, sizeof(V));
    buf_.append(tmp, sizeof(V));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& buffer() const noexcept { return buf_; }
  std::string& buffer() noexcept { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  template <typename V>
  V get(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  void bytes(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string str(const char* what, std::size_t max_len = 1u << 16) {
    const std::size_t at = pos_;
    auto n = get<std::uint32_t>(what);
    if (n > max_len) throw FormatError(std::string("implausible length for ") + what, at);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) throw FormatError(std::string("truncated while reading ") + what, pos_);
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& data);

}  // namespace avjoint::binio
