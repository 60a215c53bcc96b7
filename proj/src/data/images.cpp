// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <sstream>

#include "avjoint/data.hpp"
#include "avjoint/error.hpp"
#include "binio.hpp"

namespace avjoint::data {

ImageTensor read_ppm(const std::filesystem::path& path) {
  const std::string buf = binio::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (start == pos) throw FormatError(path.string() + ": truncated PPM header", start);
    return buf.substr(start, pos - start);
  };
  if (token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)", 0);
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed PPM header", pos);
  }
  if (maxval != 255 || w == 0 || h == 0) throw FormatError(path.string() + ": unsupported PPM", pos);
  ++pos;  // single whitespace after maxval
  if (buf.size() < pos + 3 * w * h) throw FormatError(path.string() + ": truncated PPM payload", pos);

  ImageTensor img(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<unsigned char>(buf[pos + (y * w + x) * 3 + c]) / 255.0f;
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageTensor& img) {
  if (img.channels != 3) throw InvalidInput("write_ppm: need 3 channels");
  std::ostringstream hdr;
  hdr << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string out = hdr.str();
  out.reserve(out.size() + 3 * img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
  binio::write_file(path, out);
}

std::vector<ImageTensor> downsample_video(const std::vector<ImageTensor>& frames, int src_fps) {
  if (frames.empty()) throw InvalidInput("downsample_video: no frames");
  if (src_fps < 1) throw InvalidInput("downsample_video: src_fps must be >= 1");
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < frames.size(); i += static_cast<std::size_t>(src_fps)) {
    out.push_back(frames[i]);
    out.back().second_index = i / static_cast<std::size_t>(src_fps);
  }
  return out;
}

std::size_t visual_index_for(double frame_center_time, std::size_t n_images) noexcept {
  if (n_images == 0) return 0;
  const double sec = std::floor(std::max(0.0, frame_center_time));
  return std::min(static_cast<std::size_t>(sec), n_images - 1);
}

std::vector<AlignedSample> align(const std::vector<dsp::FeatureMatrix>& audio_frames,
                                 const std::vector<ImagePtr>& visual_frames, int label) {
  if (audio_frames.empty() || visual_frames.empty())
    throw InvalidInput("align: both modalities need at least one frame");
  std::vector<AlignedSample> out;
  out.reserve(audio_frames.size());
  for (const auto& a : audio_frames) {
    const auto& v = visual_frames[visual_index_for(a.frame_center_time, visual_frames.size())];
    if (!v || v->clip_id != a.clip_id)
      throw InvalidInput("align: clip_id mismatch ('" + a.clip_id + "' vs '" +
                         (v ? v->clip_id : std::string("<null>")) + "')");
    out.push_back(AlignedSample{a, v, label, a.clip_id, a.frame_index});
  }
  return out;
}

void AugmentConfig::validate() const {
  if (!(crop_scale_lo > 0.0 && crop_scale_lo <= crop_scale_hi && crop_scale_hi <= 1.0))
    throw InvalidConfig("augment: need 0 < crop_scale_lo <= crop_scale_hi <= 1");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw InvalidConfig("augment: hflip_prob in [0,1]");
  if (!(jitter_strength >= 0.0)) throw InvalidConfig("augment: jitter_strength >= 0");
}

namespace {

float luma(const ImageTensor& img, std::size_t y, std::size_t x) {
  return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
}

void clamp01(ImageTensor& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

ImageTensor resize_crop(const ImageTensor& src, std::size_t top, std::size_t left, std::size_t ch,
                        std::size_t cw) {
  ImageTensor out(src.channels, src.height, src.width);
  out.clip_id = src.clip_id;
  out.second_index = src.second_index;
  const double sy = static_cast<double>(ch) / static_cast<double>(src.height);
  const double sx = static_cast<double>(cw) / static_cast<double>(src.width);
  for (std::size_t y = 0; y < src.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ch - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, ch - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < src.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(cw - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, cw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double a = src.at(c, top + y0, left + x0), b = src.at(c, top + y0, left + x1);
        const double d = src.at(c, top + y1, left + x0), e = src.at(c, top + y1, left + x1);
        out.at(c, y, x) = static_cast<float>((1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * d + wx * e));
      }
    }
  }
  return out;
}

}  // namespace

ImageTensor augment_image(const ImageTensor& img, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!cfg.enabled) return img;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ImageTensor out = img;
  const std::size_t H = img.height, W = img.width;

  if (!(cfg.crop_scale_lo == 1.0 && cfg.crop_scale_hi == 1.0)) {
    std::size_t ch = H, cw = W, top = 0, left = 0;
    const double area = static_cast<double>(H * W);
    const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double target = area * (cfg.crop_scale_lo + (cfg.crop_scale_hi - cfg.crop_scale_lo) * unit(rng));
      const double ratio = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
      const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
      const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
      if (w > 0 && h > 0 && w <= W && h <= H) {
        ch = h;
        cw = w;
        top = std::uniform_int_distribution<std::size_t>(0, H - h)(rng);
        left = std::uniform_int_distribution<std::size_t>(0, W - w)(rng);
        break;
      }
    }
    if (ch != H || cw != W) out = resize_crop(img, top, left, ch, cw);
  }

  if (cfg.hflip_prob > 0.0 && unit(rng) < cfg.hflip_prob) {
    for (std::size_t c = 0; c < out.channels; ++c)
      for (std::size_t y = 0; y < H; ++y)
        std::reverse(&out.data[(c * H + y) * W], &out.data[(c * H + y) * W] + W);
  }

  if (cfg.jitter_strength > 0.0) {
    const double s = cfg.jitter_strength;
    auto factor = [&]() { return static_cast<float>(std::max(0.0, 1.0 - s) + (1.0 + s - std::max(0.0, 1.0 - s)) * unit(rng)); };
    const float brightness = factor();
    const float contrast = factor();
    const float saturation = factor();

    for (auto& v : out.data) v *= brightness;
    clamp01(out);

    double mean = 0.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) mean += luma(out, y, x);
    const auto m = static_cast<float>(mean / static_cast<double>(H * W));
    for (auto& v : out.data) v = (v - m) * contrast + m;
    clamp01(out);

    if (out.channels == 3) {
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const float g = luma(out, y, x);
          for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = (out.at(c, y, x) - g) * saturation + g;
        }
      clamp01(out);
    }
  }
  return out;
}

}  // namespace avjoint::data
