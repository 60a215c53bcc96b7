// SPDX-License-Identifier: Apache-2.0
//
// Aligned audio-visual dataset construction: 1 fps video down-sampling,
// frame-level pairing of acoustic frames with images, image augmentation,
// TSV manifests with stratified validation splits, and a synthetic
// cross-modal scene generator.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "avjoint/dsp.hpp"
#include "avjoint/rng.hpp"

namespace avjoint::data {

/// C x H x W image with entries in [0, 1].
struct ImageTensor {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;
  std::string clip_id;
  std::size_t second_index = 0;

  ImageTensor() = default;
  ImageTensor(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

using ImagePtr = std::shared_ptr<const ImageTensor>;
using Embedding = std::vector<float>;

/// 8-bit binary PPM (P6). Loader normalizes to [0, 1].
ImageTensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageTensor& img);

/// Keeps the first frame of every whole second and stamps its second_index.
std::vector<ImageTensor> downsample_video(const std::vector<ImageTensor>& frames, int src_fps);

struct AlignedSample {
  dsp::FeatureMatrix audio;
  std::variant<ImagePtr, Embedding> visual;
  int label = 0;
  std::string clip_id;
  std::size_t frame_index = 0;
};

/// Index of the image paired with an acoustic frame: floor of the frame
/// center time, clamped to the last available second.
std::size_t visual_index_for(double frame_center_time, std::size_t n_images) noexcept;

std::vector<AlignedSample> align(const std::vector<dsp::FeatureMatrix>& audio_frames,
                                 const std::vector<ImagePtr>& visual_frames, int label);

// --- augmentation ----------------------------------------------------------

struct AugmentConfig {
  double crop_scale_lo = 0.5;
  double crop_scale_hi = 1.0;
  double hflip_prob = 0.5;
  double jitter_strength = 0.4;
  bool enabled = true;

  void validate() const;
};

/// Random resized crop, horizontal flip and brightness/contrast/saturation
/// jitter, in that order. Output has the input's shape, clamped to [0, 1].
ImageTensor augment_image(const ImageTensor& img, const AugmentConfig& cfg, Rng& rng);

// --- manifest ----------------------------------------------------------------

enum class Split { Train, Val, Test };

Split parse_split(const std::string& s);
const char* to_string(Split s) noexcept;

struct ManifestEntry {
  std::string clip_id;
  std::filesystem::path audio_path;
  std::filesystem::path frames_dir;
  int label = 0;
  Split split = Split::Train;
};

/// Tab-separated text: a `#classes` line listing class names, a column
/// header line, then one entry per line. Relative paths resolve against
/// `base_dir` (the manifest's directory).
struct Manifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t count(Split s) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  void validate() const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Moves round(val_fraction * n_c) train clips of each class (at least one,
/// at most n_c - 1) into the validation split.
Manifest split_train_val(const Manifest& m, double val_fraction, std::uint64_t seed);

// --- batching ----------------------------------------------------------------

/// One epoch of index batches over a seeded permutation of [0, n).
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  bool next(std::vector<std::size_t>& batch);
  std::size_t num_batches() const noexcept;

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t shuffle_seed);

// --- synthetic data ----------------------------------------------------------

enum class ConfusionMode { None, AudioOnlyPairs, VisualOnlyPairs };

ConfusionMode parse_confusion_mode(const std::string& s);
const char* to_string(ConfusionMode m) noexcept;

struct SyntheticSpec {
  std::size_t n_classes = 10;
  std::size_t clips_per_class = 20;
  double clip_seconds = 10.0;
  std::size_t image_size = 64;
  int sample_rate = 16000;
  int video_fps = 1;
  double snr_db = 10.0;
  std::size_t tones_per_class = 3;
  double image_noise = 0.08;
  double test_fraction = 0.25;
  ConfusionMode confusion_mode = ConfusionMode::None;

  void validate() const;
};

/// Per-class generative signature. Classes paired by the confusion mode share
/// the colliding modality's signature.
struct ClassSignature {
  std::vector<double> tone_hz;
  double hue = 0.0;
  double stripe_angle = 0.0;
  double stripe_freq = 2.0;
};

std::vector<ClassSignature> class_signatures(const SyntheticSpec& spec, std::uint64_t seed);

/// Waveform and 1 fps images of one synthetic clip.
struct SyntheticClip {
  dsp::Waveform audio;
  std::vector<ImageTensor> frames;  // at spec.video_fps
};

SyntheticClip synthesize_clip(const SyntheticSpec& spec, const ClassSignature& sig,
                              std::uint64_t clip_seed, const std::string& clip_id);

/// Writes audio/<clip>.wav, frames/<clip>/frame_NNNN.ppm and manifest.tsv
/// under `out_dir`; returns the manifest.
Manifest generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                            const std::filesystem::path& out_dir);

// --- loaded clips ------------------------------------------------------------

/// All frames and 1 fps images of one clip, ready for alignment.
struct Clip {
  std::string clip_id;
  int label = 0;
  std::vector<dsp::FeatureMatrix> frames;
  std::vector<ImagePtr> images;
  std::vector<std::size_t> frame_to_image;
};

struct LoadOptions {
  int video_fps = 1;
  std::filesystem::path feature_dir;  // optional AVF1 cache: <dir>/<clip_id>.avf1
  std::size_t workers = 1;
};

std::vector<Clip> load_clips(const Manifest& m, Split split, const dsp::FeatureExtractor& fx,
                             const LoadOptions& opts);

}  // namespace avjoint::data
