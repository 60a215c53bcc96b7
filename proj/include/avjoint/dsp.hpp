// SPDX-License-Identifier: Apache-2.0
//
// Acoustic front-end: resampling, stereo-to-average/difference mapping,
// long-window STFT magnitudes and the two filterbanks (Mel triangles and a
// constant-Q Gaussian "wavelet" bank) that turn them into per-frame features.
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace avjoint::dsp {

struct Waveform {
  std::vector<std::vector<double>> channels;
  int sample_rate = 16000;

  std::size_t num_channels() const noexcept { return channels.size(); }
  std::size_t length() const noexcept { return channels.empty() ? 0 : channels.front().size(); }
  double duration() const noexcept { return static_cast<double>(length()) / sample_rate; }

  /// Throws InvalidInput unless 1 or 2 equal-length channels and a positive rate.
  void validate() const;
};

enum class WindowFn { Hann, Rectangular };

struct StftConfig {
  int sample_rate = 16000;
  double window_ms = 512.0;
  double hop_ms = 171.0;
  WindowFn window = WindowFn::Hann;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  void validate() const;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class FilterKind { Mel, Wavelet };

struct FilterBank {
  FilterKind kind = FilterKind::Mel;
  std::size_t n_bins = 0;
  std::size_t n_fft_bins = 0;
  std::vector<double> weights;       // n_bins x n_fft_bins, row-major
  std::vector<double> center_freqs;  // Hz, strictly increasing
  // Half-open [first, last) column range holding the nonzero weights of each row.
  std::vector<std::pair<std::size_t, std::size_t>> support;

  double weight(std::size_t bin, std::size_t k) const { return weights[bin * n_fft_bins + k]; }
};

enum class FeatureKind { Scalogram, FBank };

FeatureKind parse_feature_kind(const std::string& s);
const char* to_string(FeatureKind kind) noexcept;

/// One acoustic frame: row 0 is the average channel, row 1 the difference channel.
struct FeatureMatrix {
  std::size_t bins = 0;
  std::vector<float> data;  // 2 x bins
  std::string clip_id;
  std::size_t frame_index = 0;
  double frame_center_time = 0.0;

  float at(std::size_t channel, std::size_t bin) const { return data[channel * bins + bin]; }
};

struct FeatureConfig {
  FeatureKind kind = FeatureKind::Scalogram;
  StftConfig stft;
  double log_floor = 1e-10;
  std::size_t mel_bins = 256;
  std::size_t wavelet_bins = 290;
  double wavelet_fmin = 50.0;

  std::size_t bins() const noexcept {
    return kind == FeatureKind::Scalogram ? wavelet_bins : mel_bins;
  }
};

Waveform resample(const Waveform& w, int target_rate);

/// (L, R) -> ((L+R)/2, (L-R)/2). Requires exactly two channels.
Waveform to_avg_diff(const Waveform& w);

/// frames x (window/2 + 1) magnitude spectrogram.
Matrix stft_magnitude(std::span<const double> channel, const StftConfig& cfg);

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

FilterBank build_mel_filterbank(std::size_t n_bins, std::size_t n_fft_bins, int sample_rate);

/// Constant-Q bank: centers geometric from `fmin` to Nyquist, Gaussian in
/// log-frequency, adjacent filters crossing at half peak. Bandwidth is
/// floored at one FFT bin.
FilterBank build_wavelet_filterbank(std::size_t n_bins, std::size_t n_fft_bins, int sample_rate,
                                    double fmin = 50.0);

/// out[t,b] = ln(max(sum_k fb[b,k] * spec[t,k], log_floor)).
Matrix apply_filterbank(const Matrix& spec, const FilterBank& fb, double log_floor);

/// Holds the filterbank for one configuration so it is built once and reused
/// across clips. Calls are const and safe from multiple threads.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureConfig cfg);

  std::vector<FeatureMatrix> operator()(const Waveform& clip, const std::string& clip_id) const;

  const FeatureConfig& config() const noexcept { return cfg_; }
  const FilterBank& filterbank() const noexcept { return fb_; }

 private:
  FeatureConfig cfg_;
  FilterBank fb_;
};

std::vector<FeatureMatrix> extract_features(const Waveform& clip, const FeatureConfig& cfg,
                                            const std::string& clip_id = "");

/// floor((len - window) / hop) + 1 for len >= window, else 0.
std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) noexcept;

// --- file formats -----------------------------------------------------------

/// 16-bit PCM RIFF/WAVE, 1 or 2 channels.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// AVF1 feature file (little-endian):
///   "AVF1" | u32 dtype (0 = f32) | u32 rank (=3) | u32 dims[rank] = {frames, 2, B}
///   | u32 clip_id_len | clip_id bytes | f64 frame_center_times[frames] | f32 payload
void write_avf1(const std::filesystem::path& path, const std::vector<FeatureMatrix>& frames);
std::vector<FeatureMatrix> read_avf1(const std::filesystem::path& path);

}  // namespace avjoint::dsp
