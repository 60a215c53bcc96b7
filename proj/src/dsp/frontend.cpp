// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>

#include "avjoint/dsp.hpp"
#include "avjoint/error.hpp"
#include "fft.hpp"

namespace avjoint::dsp {
namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

double blackman(double u) {  // u in [-1, 1]
  if (std::abs(u) >= 1.0) return 0.0;
  const double t = kPi * (u + 1.0);  // 0..2pi
  return 0.42 - 0.5 * std::cos(t) + 0.08 * std::cos(2.0 * t);
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw InvalidInput("sample_rate must be positive");
  if (channels.empty() || channels.size() > 2)
    throw InvalidInput("waveform must have 1 or 2 channels, got " + std::to_string(channels.size()));
  for (const auto& c : channels)
    if (c.size() != channels.front().size()) throw InvalidInput("channel lengths differ");
}

std::size_t StftConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
}

std::size_t StftConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_ms * sample_rate / 1000.0));
}

void StftConfig::validate() const {
  if (sample_rate <= 0) throw InvalidConfig("stft.sample_rate must be positive");
  if (window_ms < hop_ms) throw InvalidConfig("stft.window_ms must be >= stft.hop_ms");
  if (window_samples() == 0) throw InvalidConfig("window is shorter than one sample");
  if (hop_samples() == 0) throw InvalidConfig("hop is shorter than one sample");
}

std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) noexcept {
  if (length < window || hop == 0) return 0;
  return (length - window) / hop + 1;
}

// Polyphase windowed-sinc. With L/M the reduced rate ratio, output sample n
// sits at input position n*M/L = base + p/L. The low-pass cutoff is 0.95 of
// the lower of the two Nyquist frequencies; the kernel spans 32 zero
// crossings on each side under a Blackman window. One tap table per phase p.
Waveform resample(const Waveform& w, int target_rate) {
  if (w.length() == 0) throw InvalidInput("resample: empty waveform");
  if (target_rate <= 0) throw InvalidInput("resample: target rate must be positive");
  w.validate();
  if (target_rate == w.sample_rate) return w;

  const long g = std::gcd(static_cast<long>(w.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = w.sample_rate / g;
  constexpr double kRolloff = 0.95;
  constexpr int kZeroCrossings = 32;
  const double scale = kRolloff * std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const long half = static_cast<long>(std::ceil(kZeroCrossings / scale));
  const long taps = 2 * half;

  std::vector<double> table(static_cast<std::size_t>(up * taps));
  for (long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    for (long j = 0; j < taps; ++j) {
      const double d = frac - static_cast<double>(j - half + 1);
      table[static_cast<std::size_t>(p * taps + j)] =
          scale * sinc(scale * d) * blackman(d / static_cast<double>(half));
    }
  }

  const long in_len = static_cast<long>(w.length());
  const long out_len = (in_len * up + down - 1) / down;
  Waveform out;
  out.sample_rate = target_rate;
  out.channels.resize(w.num_channels());
  for (std::size_t c = 0; c < w.num_channels(); ++c) {
    const auto& x = w.channels[c];
    auto& y = out.channels[c];
    y.assign(static_cast<std::size_t>(out_len), 0.0);
    for (long n = 0; n < out_len; ++n) {
      const long pos = n * down;
      const long base = pos / up;
      const long p = pos % up;
      const double* h = &table[static_cast<std::size_t>(p * taps)];
      double acc = 0.0;
      const long k0 = base - half + 1;
      const long jlo = std::max(0L, -k0);
      const long jhi = std::min(taps, in_len - k0);
      for (long j = jlo; j < jhi; ++j) acc += x[static_cast<std::size_t>(k0 + j)] * h[j];
      y[static_cast<std::size_t>(n)] = acc;
    }
  }
  return out;
}

Waveform to_avg_diff(const Waveform& w) {
  w.validate();
  if (w.num_channels() != 2) throw InvalidInput("to_avg_diff requires exactly 2 channels");
  Waveform out;
  out.sample_rate = w.sample_rate;
  const auto& l = w.channels[0];
  const auto& r = w.channels[1];
  out.channels.assign(2, std::vector<double>(l.size()));
  for (std::size_t i = 0; i < l.size(); ++i) {
    out.channels[0][i] = (l[i] + r[i]) / 2.0;
    out.channels[1][i] = (l[i] - r[i]) / 2.0;
  }
  return out;
}

Matrix stft_magnitude(std::span<const double> channel, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (channel.size() < n)
    throw InvalidInput("stft: signal of " + std::to_string(channel.size()) +
                       " samples is shorter than one window (" + std::to_string(n) + ")");
  const std::size_t frames = frame_count(channel.size(), n, hop);
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n, 1.0);
  if (cfg.window == WindowFn::Hann)
    for (std::size_t i = 0; i < n; ++i)
      window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));

  Matrix out(frames, bins);
  detail::RealFft plan(n);
  std::vector<double> seg(n);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t off = t * hop;
    for (std::size_t i = 0; i < n; ++i) seg[i] = channel[off + i] * window[i];
    plan.magnitude(seg, std::span<double>(&out.data[t * bins], bins));
  }
  return out;
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

double fft_bin_hz(std::size_t k, std::size_t n_fft_bins, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  return n_fft_bins > 1 ? nyquist * static_cast<double>(k) / static_cast<double>(n_fft_bins - 1) : 0.0;
}

void check_bank_args(std::size_t n_bins, std::size_t n_fft_bins, int sample_rate) {
  if (n_bins == 0) throw InvalidConfig("filterbank needs at least one bin");
  if (n_bins >= n_fft_bins)
    throw InvalidConfig("filterbank: n_bins (" + std::to_string(n_bins) +
                        ") must be smaller than n_fft_bins (" + std::to_string(n_fft_bins) + ")");
  if (sample_rate <= 0) throw InvalidConfig("filterbank: sample_rate must be positive");
}

// Rows that fall entirely between two FFT bins get a unit weight on the
// nearest bin, so every filter sees some energy. Also records supports.
void finalize_bank(FilterBank& fb, int sample_rate) {
  fb.support.assign(fb.n_bins, {0, 0});
  const double bin_hz = fft_bin_hz(1, fb.n_fft_bins, sample_rate);
  for (std::size_t b = 0; b < fb.n_bins; ++b) {
    double* row = &fb.weights[b * fb.n_fft_bins];
    std::size_t first = fb.n_fft_bins, last = 0;
    for (std::size_t k = 0; k < fb.n_fft_bins; ++k) {
      if (row[k] > 0.0) {
        first = std::min(first, k);
        last = k + 1;
      }
    }
    if (first == fb.n_fft_bins) {
      const auto k = std::min<std::size_t>(fb.n_fft_bins - 1,
                                           static_cast<std::size_t>(std::llround(fb.center_freqs[b] / bin_hz)));
      row[k] = 1.0;
      first = k;
      last = k + 1;
    }
    fb.support[b] = {first, last};
  }
}

}  // namespace

FilterBank build_mel_filterbank(std::size_t n_bins, std::size_t n_fft_bins, int sample_rate) {
  check_bank_args(n_bins, n_fft_bins, sample_rate);
  FilterBank fb;
  fb.kind = FilterKind::Mel;
  fb.n_bins = n_bins;
  fb.n_fft_bins = n_fft_bins;
  fb.weights.assign(n_bins * n_fft_bins, 0.0);
  fb.center_freqs.resize(n_bins);

  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_bins + 1));
  edges.back() = sample_rate / 2.0;

  for (std::size_t b = 0; b < n_bins; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    fb.center_freqs[b] = mid;
    for (std::size_t k = 0; k < n_fft_bins; ++k) {
      const double f = fft_bin_hz(k, n_fft_bins, sample_rate);
      double v = 0.0;
      if (f > lo && f <= mid)
        v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi)
        v = (hi - f) / (hi - mid);
      fb.weights[b * n_fft_bins + k] = v;
    }
  }
  finalize_bank(fb, sample_rate);
  return fb;
}

FilterBank build_wavelet_filterbank(std::size_t n_bins, std::size_t n_fft_bins, int sample_rate,
                                    double fmin) {
  check_bank_args(n_bins, n_fft_bins, sample_rate);
  const double fmax = sample_rate / 2.0;
  if (!(fmin > 0.0) || fmin >= fmax) throw InvalidConfig("wavelet bank: need 0 < fmin < Nyquist");

  FilterBank fb;
  fb.kind = FilterKind::Wavelet;
  fb.n_bins = n_bins;
  fb.n_fft_bins = n_fft_bins;
  fb.weights.assign(n_bins * n_fft_bins, 0.0);
  fb.center_freqs.resize(n_bins);

  // Spacing in octaves between neighbouring centers; a single filter is
  // placed at the geometric middle of the range with a one-octave width.
  double step_oct;
  if (n_bins == 1) {
    fb.center_freqs[0] = std::sqrt(fmin * fmax);
    step_oct = 1.0;
  } else {
    step_oct = std::log2(fmax / fmin) / static_cast<double>(n_bins - 1);
    for (std::size_t b = 0; b < n_bins; ++b)
      fb.center_freqs[b] = fmin * std::exp2(step_oct * static_cast<double>(b));
  }
  // exp(-(d/2)^2 / (2 sigma^2)) == 1/2 at the midpoint between centers.
  const double sigma = (step_oct / 2.0) / std::sqrt(2.0 * std::numbers::ln2);
  constexpr double kCutSigmas = 8.0;

  // Low filters narrower than one FFT bin would alias onto the bin grid, so
  // the bandwidth never drops below one bin.
  const double bin_hz = fft_bin_hz(1, n_fft_bins, sample_rate);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double c = fb.center_freqs[b];
    const double sig = std::max(sigma, std::log2(1.0 + bin_hz / c));
    for (std::size_t k = 1; k < n_fft_bins; ++k) {
      const double d = std::log2(fft_bin_hz(k, n_fft_bins, sample_rate) / c) / sig;
      if (std::abs(d) > kCutSigmas) continue;
      fb.weights[b * n_fft_bins + k] = std::exp(-0.5 * d * d);
    }
  }
  finalize_bank(fb, sample_rate);
  return fb;
}

Matrix apply_filterbank(const Matrix& spec, const FilterBank& fb, double log_floor) {
  if (spec.cols != fb.n_fft_bins)
    throw InvalidInput("apply_filterbank: spectrogram has " + std::to_string(spec.cols) +
                       " columns, filterbank expects " + std::to_string(fb.n_fft_bins));
  if (!(log_floor > 0.0)) throw InvalidConfig("log_floor must be positive");
  const bool have_support = fb.support.size() == fb.n_bins;
  Matrix out(spec.rows, fb.n_bins);
  for (std::size_t t = 0; t < spec.rows; ++t) {
    const double* s = &spec.data[t * spec.cols];
    for (std::size_t b = 0; b < fb.n_bins; ++b) {
      const double* w = &fb.weights[b * fb.n_fft_bins];
      std::size_t k0 = 0, k1 = fb.n_fft_bins;
      if (have_support) std::tie(k0, k1) = fb.support[b];
      double acc = 0.0;
      for (std::size_t k = k0; k < k1; ++k) acc += w[k] * s[k];
      out(t, b) = std::log(std::max(acc, log_floor));
    }
  }
  return out;
}

FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "scalogram") return FeatureKind::Scalogram;
  if (s == "fbank") return FeatureKind::FBank;
  throw InvalidConfig("unknown feature kind '" + s + "' (expected scalogram|fbank)");
}

const char* to_string(FeatureKind kind) noexcept {
  return kind == FeatureKind::Scalogram ? "scalogram" : "fbank";
}

FeatureExtractor::FeatureExtractor(FeatureConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.stft.validate();
  const std::size_t n_fft_bins = cfg_.stft.window_samples() / 2 + 1;
  fb_ = cfg_.kind == FeatureKind::Scalogram
            ? build_wavelet_filterbank(cfg_.wavelet_bins, n_fft_bins, cfg_.stft.sample_rate,
                                       cfg_.wavelet_fmin)
            : build_mel_filterbank(cfg_.mel_bins, n_fft_bins, cfg_.stft.sample_rate);
}

std::vector<FeatureMatrix> FeatureExtractor::operator()(const Waveform& clip,
                                                        const std::string& clip_id) const {
  clip.validate();
  Waveform stereo = clip;
  if (stereo.num_channels() == 1) {
    warn("clip '" + clip_id + "' is mono; duplicating the channel");
    stereo.channels.push_back(stereo.channels.front());
  }
  if (stereo.sample_rate != cfg_.stft.sample_rate) stereo = resample(stereo, cfg_.stft.sample_rate);
  const Waveform ad = to_avg_diff(stereo);

  const std::size_t bins = fb_.n_bins;
  std::vector<Matrix> rows;
  for (const auto& ch : ad.channels)
    rows.push_back(apply_filterbank(stft_magnitude(ch, cfg_.stft), fb_, cfg_.log_floor));

  const double win = static_cast<double>(cfg_.stft.window_samples());
  const double hop = static_cast<double>(cfg_.stft.hop_samples());
  std::vector<FeatureMatrix> frames(rows[0].rows);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    auto& f = frames[t];
    f.bins = bins;
    f.clip_id = clip_id;
    f.frame_index = t;
    f.frame_center_time = (static_cast<double>(t) * hop + win / 2.0) / cfg_.stft.sample_rate;
    f.data.resize(2 * bins);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t b = 0; b < bins; ++b) f.data[c * bins + b] = static_cast<float>(rows[c](t, b));
  }
  return frames;
}

std::vector<FeatureMatrix> extract_features(const Waveform& clip, const FeatureConfig& cfg,
                                            const std::string& clip_id) {
  return FeatureExtractor(cfg)(clip, clip_id);
}

}  // namespace avjoint::dsp
