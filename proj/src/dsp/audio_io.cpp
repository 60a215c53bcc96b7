// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "avjoint/dsp.hpp"
#include "avjoint/error.hpp"
#include "binio.hpp"

namespace avjoint::dsp {

Waveform read_wav(const std::filesystem::path& path) {
  const std::string buf = binio::read_file(path);
  binio::Reader r(buf);
  char tag[4];
  r.bytes(tag, 4, "RIFF tag");
  if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError(path.string() + ": not a RIFF file", 0);
  r.get<std::uint32_t>("RIFF size");
  r.bytes(tag, 4, "WAVE tag");
  if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError(path.string() + ": not a WAVE file", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    r.bytes(tag, 4, "chunk id");
    const auto size = r.get<std::uint32_t>("chunk size");
    const std::size_t at = r.pos();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = r.get<std::uint16_t>("fmt.format");
      channels = r.get<std::uint16_t>("fmt.channels");
      rate = r.get<std::uint32_t>("fmt.rate");
      r.get<std::uint32_t>("fmt.byte_rate");
      r.get<std::uint16_t>("fmt.block_align");
      bits = r.get<std::uint16_t>("fmt.bits");
      have_fmt = true;
      r.need(size - (r.pos() - at), "fmt padding");
      std::string skip(size - (r.pos() - at), '\0');
      r.bytes(skip.data(), skip.size(), "fmt padding");
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(path.string() + ": data chunk before fmt", at);
      if (format != 1 || bits != 16)
        throw FormatError(path.string() + ": only 16-bit PCM is supported", at);
      if (channels < 1 || channels > 2)
        throw FormatError(path.string() + ": unsupported channel count", at);
      r.need(size, "sample data");
      const std::size_t frames = size / (2u * channels);
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.channels.assign(channels, std::vector<double>(frames));
      for (std::size_t i = 0; i < frames; ++i)
        for (std::size_t c = 0; c < channels; ++c)
          w.channels[c][i] = r.get<std::int16_t>("sample") / 32768.0;
      return w;
    } else {
      r.need(size + (size & 1u), "chunk body");
      std::string skip(size + (size & 1u), '\0');
      r.bytes(skip.data(), skip.size(), "chunk body");
    }
  }
  throw FormatError(path.string() + ": no data chunk", r.pos());
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  const auto channels = static_cast<std::uint16_t>(w.num_channels());
  const auto frames = static_cast<std::uint32_t>(w.length());
  const std::uint32_t data_bytes = frames * channels * 2u;
  binio::Writer out;
  out.bytes("RIFF", 4);
  out.put<std::uint32_t>(36u + data_bytes);
  out.bytes("WAVE", 4);
  out.bytes("fmt ", 4);
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(1);
  out.put<std::uint16_t>(channels);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate) * channels * 2u);
  out.put<std::uint16_t>(static_cast<std::uint16_t>(channels * 2u));
  out.put<std::uint16_t>(16);
  out.bytes("data", 4);
  out.put<std::uint32_t>(data_bytes);
  for (std::size_t i = 0; i < frames; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::clamp(w.channels[c][i], -1.0, 1.0);
      out.put<std::int16_t>(static_cast<std::int16_t>(std::lround(std::min(v * 32768.0, 32767.0))));
    }
  binio::write_file(path, out.buffer());
}

void write_avf1(const std::filesystem::path& path, const std::vector<FeatureMatrix>& frames) {
  if (frames.empty()) throw InvalidInput("write_avf1: no frames");
  const std::size_t bins = frames.front().bins;
  binio::Writer out;
  out.bytes("AVF1", 4);
  out.put<std::uint32_t>(0);  // f32
  out.put<std::uint32_t>(3);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(frames.size()));
  out.put<std::uint32_t>(2);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(bins));
  out.str(frames.front().clip_id);
  for (const auto& f : frames) out.put<double>(f.frame_center_time);
  for (const auto& f : frames) {
    if (f.bins != bins || f.data.size() != 2 * bins) throw InvalidInput("write_avf1: ragged frames");
    out.bytes(f.data.data(), f.data.size() * sizeof(float));
  }
  binio::write_file(path, out.buffer());
}

std::vector<FeatureMatrix> read_avf1(const std::filesystem::path& path) {
  const std::string buf = binio::read_file(path);
  binio::Reader r(buf);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "AVF1", 4) != 0) throw FormatError(path.string() + ": bad AVF1 magic", 0);
  const std::size_t dtype_at = r.pos();
  if (r.get<std::uint32_t>("dtype") != 0) throw FormatError(path.string() + ": unsupported dtype", dtype_at);
  const std::size_t rank_at = r.pos();
  if (r.get<std::uint32_t>("rank") != 3) throw FormatError(path.string() + ": AVF1 rank must be 3", rank_at);
  const auto n = r.get<std::uint32_t>("dims[0]");
  const std::size_t ch_at = r.pos();
  if (r.get<std::uint32_t>("dims[1]") != 2) throw FormatError(path.string() + ": expected 2 channels", ch_at);
  const auto bins = r.get<std::uint32_t>("dims[2]");
  const std::string clip_id = r.str("clip_id");
  r.need(static_cast<std::size_t>(n) * 8u + static_cast<std::size_t>(n) * 2u * bins * 4u, "payload");
  std::vector<FeatureMatrix> frames(n);
  for (std::uint32_t t = 0; t < n; ++t) {
    frames[t].frame_center_time = r.get<double>("frame time");
    frames[t].clip_id = clip_id;
    frames[t].frame_index = t;
    frames[t].bins = bins;
  }
  for (auto& f : frames) {
    f.data.resize(2u * bins);
    r.bytes(f.data.data(), f.data.size() * sizeof(float), "payload");
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes", r.pos());
  return frames;
}

}  // namespace avjoint::dsp
