// SPDX-License-Identifier: Apache-2.0
#include "avjoint/nn/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <vector>

#include "binio.hpp"

namespace avjoint::nn {
namespace {

constexpr std::uint32_t kF32 = 0, kF64 = 1;

template <typename T>
constexpr std::uint32_t dtype_code() {
  return sizeof(T) == 4 ? kF32 : kF64;
}

std::uint32_t crc_of(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

}  // namespace

template <typename T>
std::string encode_weights(const ParamStore<T>& store) {
  binio::Writer w;
  w.bytes("AVW1", 4);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    w.str(p.name);
    w.put<std::uint8_t>(p.frozen || p.buffer ? 1 : 0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.group));
    w.put<std::uint32_t>(dtype_code<T>());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.dims()) w.put<std::uint64_t>(d);
    w.bytes(p.value.data(), p.value.size() * sizeof(T));
  }
  w.put<std::uint32_t>(crc_of(w.buffer(), w.buffer().size()));
  return w.buffer();
}

namespace {

template <typename T>
void decode_into(const std::string& bytes, ParamStore<T>& store, bool require_all) {
  if (bytes.size() < 12) throw FormatError("checkpoint too short", bytes.size());
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "AVW1", 4) != 0) throw FormatError("bad AVW1 magic", 0);
  const auto count = r.get<std::uint32_t>("entry count");

  std::vector<bool> seen(store.size(), false);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_at = r.pos();
    const std::string name = r.str("entry name");
    r.get<std::uint8_t>("frozen flag");
    const std::size_t group_at = r.pos();
    if (r.get<std::uint8_t>("group tag") > 2) throw FormatError("unknown group tag in '" + name + "'", group_at);
    const std::size_t dtype_at = r.pos();
    const auto dtype = r.get<std::uint32_t>("dtype");
    if (dtype != kF32 && dtype != kF64) throw FormatError("unknown dtype in '" + name + "'", dtype_at);
    const std::size_t rank_at = r.pos();
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible rank in '" + name + "'", rank_at);
    std::vector<std::size_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      const std::size_t dim_at = r.pos();
      const auto v = r.get<std::uint64_t>("dim");
      if (v > (1ull << 32)) throw FormatError("implausible dimension in '" + name + "'", dim_at);
      d = static_cast<std::size_t>(v);
      n *= d;
    }
    const std::size_t width = dtype == kF32 ? 4 : 8;
    r.need(n * width, "payload");

    Param<T>* p = store.find(name);
    if (!p) {
      std::vector<char> skip(n * width);
      r.bytes(skip.data(), skip.size(), "payload");
      continue;
    }
    if (p->value.dims() != dims)
      throw FormatError("shape of '" + name + "' does not match the model (" + p->value.shape_string() + ")", entry_at);
    if (dtype == dtype_code<T>()) {
      r.bytes(p->value.data(), n * sizeof(T), "payload");
    } else if (dtype == kF32) {
      std::vector<float> tmp(n);
      r.bytes(tmp.data(), n * 4, "payload");
      for (std::size_t i = 0; i < n; ++i) p->value[i] = static_cast<T>(tmp[i]);
    } else {
      std::vector<double> tmp(n);
      r.bytes(tmp.data(), n * 8, "payload");
      for (std::size_t i = 0; i < n; ++i) p->value[i] = static_cast<T>(tmp[i]);
    }
    for (std::size_t i = 0; i < store.size(); ++i)
      if (&store[i] == p) seen[i] = true;
  }
  const std::size_t crc_at = r.pos();
  const auto stored = r.get<std::uint32_t>("checksum");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.pos());
  if (stored != crc_of(bytes, crc_at)) throw FormatError("checksum mismatch", crc_at);
  if (require_all)
    for (std::size_t i = 0; i < store.size(); ++i)
      if (!seen[i]) throw FormatError("checkpoint lacks entry '" + store[i].name + "'", bytes.size());
}

}  // namespace

template <typename T>
void decode_weights(const std::string& bytes, ParamStore<T>& store, bool require_all) {
  // A corrupt checkpoint leaves the store untouched.
  const auto before = store.snapshot();
  try {
    decode_into(bytes, store, require_all);
  } catch (...) {
    store.restore(before);
    throw;
  }
}

template <typename T>
void save_weights(const std::filesystem::path& path, const ParamStore<T>& store) {
  binio::write_file(path, encode_weights(store));
}

template <typename T>
void load_weights(const std::filesystem::path& path, ParamStore<T>& store, bool require_all) {
  decode_weights(binio::read_file(path), store, require_all);
}

template std::string encode_weights<float>(const ParamStore<float>&);
template std::string encode_weights<double>(const ParamStore<double>&);
template void decode_weights<float>(const std::string&, ParamStore<float>&, bool);
template void decode_weights<double>(const std::string&, ParamStore<double>&, bool);
template void save_weights<float>(const std::filesystem::path&, const ParamStore<float>&);
template void save_weights<double>(const std::filesystem::path&, const ParamStore<double>&);
template void load_weights<float>(const std::filesystem::path&, ParamStore<float>&, bool);
template void load_weights<double>(const std::filesystem::path&, ParamStore<double>&, bool);

}  // namespace avjoint::nn
