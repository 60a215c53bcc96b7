// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <thread>

#include "avjoint/data.hpp"
#include "avjoint/error.hpp"

namespace avjoint::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  const double table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
  for (int c = 0; c < 3; ++c) rgb[c] = table[i][c];
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.ppm", i);
  return buf;
}

}  // namespace

ConfusionMode parse_confusion_mode(const std::string& s) {
  if (s == "none") return ConfusionMode::None;
  if (s == "audio_only_pairs") return ConfusionMode::AudioOnlyPairs;
  if (s == "visual_only_pairs") return ConfusionMode::VisualOnlyPairs;
  throw InvalidConfig("unknown confusion_mode '" + s + "'");
}

const char* to_string(ConfusionMode m) noexcept {
  switch (m) {
    case ConfusionMode::None: return "none";
    case ConfusionMode::AudioOnlyPairs: return "audio_only_pairs";
    case ConfusionMode::VisualOnlyPairs: return "visual_only_pairs";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw InvalidConfig("synth: n_classes must be >= 2");
  if (clips_per_class < 2) throw InvalidConfig("synth: clips_per_class must be >= 2");
  if (!(clip_seconds > 0.6)) throw InvalidConfig("synth: clip_seconds must exceed one analysis window");
  if (image_size < 8) throw InvalidConfig("synth: image_size must be >= 8");
  if (sample_rate < 2000) throw InvalidConfig("synth: sample_rate too low");
  if (video_fps < 1) throw InvalidConfig("synth: video_fps must be >= 1");
  if (tones_per_class < 1) throw InvalidConfig("synth: tones_per_class must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InvalidConfig("synth: test_fraction in [0,1)");
}

// Tones sit on centers of the default 290-band constant-Q bank (50 Hz to
// Nyquist), drawn without replacement from every 4th band in the middle of
// the range so no two classes share a tone. Under a pairing confusion mode
// the odd member of each pair (2j, 2j+1) copies the even member's signature
// for the colliding modality.
std::vector<ClassSignature> class_signatures(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr std::size_t kBands = 290;
  const double fmin = 50.0, fmax = spec.sample_rate / 2.0;
  const double step = std::log2(fmax / fmin) / static_cast<double>(kBands - 1);
  std::vector<std::size_t> candidates;
  for (std::size_t b = 40; b < 270; b += 4) candidates.push_back(b);
  if (candidates.size() < spec.n_classes * spec.tones_per_class)
    throw InvalidConfig("synth: too many classes/tones for the available bands");
  Rng rng = make_rng(seed, SeedPurpose::Synth, tag_hash("signatures"));
  std::shuffle(candidates.begin(), candidates.end(), rng);

  const std::size_t k = spec.n_classes;
  std::vector<ClassSignature> sigs(k);
  auto paired = [](std::size_t c) { return c % 2 == 1 ? c - 1 : c; };
  std::size_t visual_groups = k;
  if (spec.confusion_mode == ConfusionMode::AudioOnlyPairs) visual_groups = (k + 1) / 2;

  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t a_src = spec.confusion_mode == ConfusionMode::VisualOnlyPairs ? paired(c) : c;
    for (std::size_t t = 0; t < spec.tones_per_class; ++t) {
      const std::size_t band = candidates[a_src * spec.tones_per_class + t];
      sigs[c].tone_hz.push_back(fmin * std::exp2(step * static_cast<double>(band)));
    }
    std::sort(sigs[c].tone_hz.begin(), sigs[c].tone_hz.end());
    const std::size_t g = spec.confusion_mode == ConfusionMode::AudioOnlyPairs ? c / 2 : c;
    sigs[c].hue = static_cast<double>(g) / static_cast<double>(visual_groups);
    sigs[c].stripe_angle = std::numbers::pi * static_cast<double>(g) / static_cast<double>(visual_groups);
    sigs[c].stripe_freq = 2.0 + static_cast<double>(g % 3);
  }
  return sigs;
}

SyntheticClip synthesize_clip(const SyntheticSpec& spec, const ClassSignature& sig,
                              std::uint64_t clip_seed, const std::string& clip_id) {
  Rng rng(clip_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticClip clip;
  const auto n = static_cast<std::size_t>(std::llround(spec.clip_seconds * spec.sample_rate));
  std::vector<double> amp(sig.tone_hz.size()), phase(sig.tone_hz.size());
  double power = 0.0;
  for (std::size_t i = 0; i < amp.size(); ++i) {
    amp[i] = (0.6 + 0.4 * unit(rng)) * 0.6 / static_cast<double>(amp.size());
    phase[i] = kTwoPi * unit(rng);
    power += amp[i] * amp[i] / 2.0;
  }
  const double noise_sd = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
  const double right_gain = 0.6 + 0.4 * unit(rng);
  clip.audio.sample_rate = spec.sample_rate;
  clip.audio.channels.assign(2, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    double s = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) s += amp[k] * std::sin(kTwoPi * sig.tone_hz[k] * t + phase[k]);
    clip.audio.channels[0][i] = std::clamp(s + noise_sd * gauss(rng), -1.0, 1.0);
    clip.audio.channels[1][i] = std::clamp(right_gain * s + noise_sd * gauss(rng), -1.0, 1.0);
  }

  double base[3];
  hsv_to_rgb(sig.hue, 0.6, 0.75, base);
  const double brightness = 0.85 + 0.3 * unit(rng);
  const double phase0 = kTwoPi * unit(rng);
  const std::size_t S = spec.image_size;
  const auto n_frames = static_cast<std::size_t>(std::ceil(spec.clip_seconds * spec.video_fps - 1e-9));
  const double ca = std::cos(sig.stripe_angle), sa = std::sin(sig.stripe_angle);
  for (std::size_t f = 0; f < n_frames; ++f) {
    ImageTensor img(3, S, S);
    img.clip_id = clip_id;
    img.second_index = f / static_cast<std::size_t>(spec.video_fps);
    const double ph = phase0 + 0.3 * static_cast<double>(f) / spec.video_fps;
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const double u = (static_cast<double>(x) * ca + static_cast<double>(y) * sa) / static_cast<double>(S);
        const double tex = 0.7 + 0.3 * std::sin(kTwoPi * sig.stripe_freq * u + ph);
        for (std::size_t c = 0; c < 3; ++c)
          img.at(c, y, x) = static_cast<float>(
              std::clamp(base[c] * brightness * tex + spec.image_noise * gauss(rng), 0.0, 1.0));
      }
    clip.frames.push_back(std::move(img));
  }
  return clip;
}

Manifest generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                            const std::filesystem::path& out_dir) {
  spec.validate();
  const auto sigs = class_signatures(spec, seed);
  Manifest m;
  m.base_dir = out_dir;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%02zu", c);
    m.class_names.emplace_back(name);
  }
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::vector<std::size_t> order(spec.clips_per_class);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, SeedPurpose::Synth, tag_hash("test_split"), c);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(spec.test_fraction * static_cast<double>(spec.clips_per_class)));
    if (spec.test_fraction > 0.0) n_test = std::clamp<std::size_t>(n_test, 1, spec.clips_per_class - 1);
    std::vector<bool> is_test(spec.clips_per_class, false);
    for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;
    for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03zu", m.class_names[c].c_str(), i);
      ManifestEntry e;
      e.clip_id = id;
      e.audio_path = std::filesystem::path("audio") / (e.clip_id + ".wav");
      e.frames_dir = std::filesystem::path("frames") / e.clip_id;
      e.label = static_cast<int>(c);
      e.split = is_test[i] ? Split::Test : Split::Train;
      m.entries.push_back(std::move(e));
    }
  }

  std::filesystem::create_directories(out_dir / "audio");
  std::filesystem::create_directories(out_dir / "frames");
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const auto clip = synthesize_clip(spec, sigs[static_cast<std::size_t>(e.label)],
                                      derive_seed(seed, SeedPurpose::Synth, tag_hash("clip"), i), e.clip_id);
    try {
      dsp::write_wav(out_dir / e.audio_path, clip.audio);
      std::filesystem::create_directories(out_dir / e.frames_dir);
      for (std::size_t f = 0; f < clip.frames.size(); ++f)
        write_ppm(out_dir / e.frames_dir / frame_name(f), clip.frames[f]);
    } catch (const std::filesystem::filesystem_error& err) {
      throw IoError(std::string("synth: ") + err.what());
    }
  }
  write_manifest(out_dir / "manifest.tsv", m);
  return m;
}

std::vector<Clip> load_clips(const Manifest& m, Split split, const dsp::FeatureExtractor& fx,
                             const LoadOptions& opts) {
  std::vector<const ManifestEntry*> todo;
  for (const auto& e : m.entries)
    if (e.split == split) todo.push_back(&e);
  std::vector<Clip> out(todo.size());
  std::vector<std::exception_ptr> errors(todo.size());
  std::atomic<std::size_t> next{0};

  auto work = [&]() {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        const auto& e = *todo[i];
        Clip& c = out[i];
        c.clip_id = e.clip_id;
        c.label = e.label;
        const auto cached = opts.feature_dir.empty() ? std::filesystem::path()
                                                     : opts.feature_dir / (e.clip_id + ".avf1");
        if (!cached.empty() && std::filesystem::exists(cached)) {
          c.frames = dsp::read_avf1(cached);
          for (auto& f : c.frames) f.clip_id = e.clip_id;
          if (!c.frames.empty() && c.frames.front().bins != fx.config().bins())
            throw InvalidInput(cached.string() + ": feature width does not match the configured kind");
        } else {
          c.frames = fx(dsp::read_wav(m.resolve(e.audio_path)), e.clip_id);
        }
        if (c.frames.empty()) throw InvalidInput("clip '" + e.clip_id + "' is shorter than one analysis window");

        std::vector<std::filesystem::path> files;
        const auto dir = m.resolve(e.frames_dir);
        if (!std::filesystem::is_directory(dir)) throw IoError("missing frames directory " + dir.string());
        for (const auto& de : std::filesystem::directory_iterator(dir))
          if (de.path().extension() == ".ppm") files.push_back(de.path());
        std::sort(files.begin(), files.end());
        std::vector<ImageTensor> raw;
        for (const auto& f : files) {
          raw.push_back(read_ppm(f));
          raw.back().clip_id = e.clip_id;
        }
        for (auto& img : downsample_video(raw, opts.video_fps))
          c.images.push_back(std::make_shared<const ImageTensor>(std::move(img)));
        for (const auto& f : c.frames) c.frame_to_image.push_back(visual_index_for(f.frame_center_time, c.images.size()));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opts.workers, todo.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace avjoint::data
