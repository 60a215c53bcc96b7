// SPDX-License-Identifier: Apache-2.0
//
// Acoustic encoder (res-DCNN), frozen visual encoder, scene classifier and
// their wiring into the four systems: audio-only, video-only, pipeline
// audio-visual and joint audio-visual.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "avjoint/nn/layers.hpp"
#include "avjoint/nn/params.hpp"

namespace avjoint::model {

using nn::Mode;
using nn::ParamGroup;
using nn::ParamStore;
using nn::Tensor;

struct AcousticEncoderCfg {
  std::size_t in_bins = 290;
  std::size_t in_channels = 2;
  std::vector<std::size_t> channels{4, 8, 16, 32};
  std::size_t kernel = 3;
  std::size_t pool_kernel = 3, pool_pad = 1, pool_stride = 2;
  std::size_t fc1 = 2048;
  std::size_t fc2 = 1024;
  double dropout = 0.5;
  bool residual_shortcut = true;
  bool input_concat = true;

  /// Throws InvalidConfig if the plan is malformed or `in_bins` is too
  /// short to survive every block.
  void validate() const;
  /// Length after the last conv block.
  std::size_t conv_out_len() const;
  /// Width fed into fc1: flattened conv output plus (optionally) the flattened input.
  std::size_t concat_width() const;
  std::size_t embed_dim() const noexcept { return fc2; }
};

struct VisualEncoderCfg {
  std::vector<std::size_t> channels{16, 32, 64, 128};
  std::size_t image_size = 64;
  std::filesystem::path weights_path;

  void validate() const;
  std::size_t embed_dim() const noexcept { return channels.empty() ? 0 : channels.back(); }
};

struct SceneClassifierCfg {
  std::size_t hidden = 1024;
  double dropout = 0.5;
  std::size_t n_classes = 10;
};

enum class SystemMode { AudioOnly, VideoOnly, AvPipeline, AvJoint };

SystemMode parse_system_mode(const std::string& s);
const char* to_string(SystemMode m) noexcept;

struct ModelConfig {
  SystemMode mode = SystemMode::AvJoint;
  AcousticEncoderCfg ae;
  VisualEncoderCfg ve;
  SceneClassifierCfg sc;

  bool has_ae() const noexcept { return mode != SystemMode::VideoOnly; }
  bool has_ve() const noexcept { return mode != SystemMode::AudioOnly; }
  std::size_t sc_input_width() const noexcept;
};

template <typename T>
class AcousticEncoder {
 public:
  AcousticEncoder(ParamStore<T>& store, const AcousticEncoderCfg& cfg);

  void init(Rng& rng);
  /// N x 2 x B -> N x fc2.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& dropout_rng);
  /// Accumulates parameter gradients; returns the input gradient.
  Tensor<T> backward(const Tensor<T>& dy);
  /// Activations after the conv stack, N x C_last x L_last, from the last forward.
  const Tensor<T>& conv_output() const noexcept { return conv_out_; }

  const AcousticEncoderCfg& config() const noexcept { return cfg_; }

 private:
  struct Block {
    nn::Conv1d<T> conv;
    nn::BatchNorm<T> bn;
    nn::ReLU<T> relu;
    nn::AvgPool1d<T> pool;
    std::optional<nn::Conv1d<T>> shortcut;
    nn::AvgPool1d<T> shortcut_pool;
  };
  AcousticEncoderCfg cfg_;
  std::vector<Block> blocks_;
  nn::Linear<T> fc1_;
  nn::BatchNorm<T> bn1_;
  nn::ReLU<T> relu1_;
  nn::Dropout<T> drop1_;
  nn::Linear<T> fc2_;
  nn::BatchNorm<T> bn2_;
  nn::ReLU<T> relu2_;
  Tensor<T> conv_out_;
  std::vector<std::size_t> in_dims_;
};

template <typename T>
class VisualEncoder {
 public:
  VisualEncoder(ParamStore<T>& store, const VisualEncoderCfg& cfg);

  void init(Rng& rng);
  /// N x 3 x S x S -> N x D_v.
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);
  const VisualEncoderCfg& config() const noexcept { return cfg_; }

 private:
  struct Block {
    nn::Conv2d<T> conv;
    nn::BatchNorm<T> bn;
    nn::ReLU<T> relu;
  };
  VisualEncoderCfg cfg_;
  std::vector<Block> blocks_;
  nn::GlobalAvgPool2d<T> gap_;
};

template <typename T>
class SceneClassifier {
 public:
  SceneClassifier(ParamStore<T>& store, std::size_t in_width, const SceneClassifierCfg& cfg);

  void init(Rng& rng);
  /// N x in_width -> N x K logits.
  Tensor<T> forward(const Tensor<T>& e, Mode mode, Rng& dropout_rng);
  Tensor<T> backward(const Tensor<T>& dlogits);
  std::size_t in_width() const noexcept { return in_width_; }

 private:
  std::size_t in_width_;
  nn::Linear<T> fc1_;
  nn::BatchNorm<T> bn1_;
  nn::ReLU<T> relu1_;
  nn::Dropout<T> drop1_;
  nn::Linear<T> fc2_;
};

/// Inputs for one batch. Either modality may arrive raw (features / images)
/// or as a precomputed encoder embedding.
template <typename T>
struct ModelInput {
  Tensor<T> audio;
  bool audio_is_embedding = false;
  Tensor<T> visual;
  bool visual_is_embedding = false;
};

/// e = AE(a) (+) VE(v); the AE part comes first.
template <typename T>
Tensor<T> fuse(const Tensor<T>& ae_emb, const Tensor<T>& ve_emb);

template <typename T>
class AVModel {
 public:
  explicit AVModel(ModelConfig cfg);
  AVModel(const AVModel&) = delete;
  AVModel& operator=(const AVModel&) = delete;

  /// Seeds each present group from its own stream (Init, tag "AE"/"VE"/"SC").
  void init(std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore<T>& params() noexcept { return store_; }
  const ParamStore<T>& params() const noexcept { return store_; }
  AcousticEncoder<T>* ae() noexcept { return ae_ ? &*ae_ : nullptr; }
  VisualEncoder<T>* ve() noexcept { return ve_ ? &*ve_ : nullptr; }
  SceneClassifier<T>& sc() noexcept { return *sc_; }

  /// AE trainability follows the mode (trainable in audio-only and joint);
  /// a frozen AE always runs in eval mode.
  bool ae_trainable() const noexcept;
  void set_ae_trainable(bool trainable);

  Tensor<T> encode_audio(const Tensor<T>& features, Mode mode, Rng& dropout_rng);
  Tensor<T> encode_visual(const Tensor<T>& images);

  /// Fused embedding e for the given inputs (encoders in eval mode unless
  /// `mode` is Train and the encoder is trainable).
  Tensor<T> embed(const ModelInput<T>& in, Mode mode, Rng& dropout_rng);

  /// Logits, N x K. Caches activations for backward().
  Tensor<T> forward(const ModelInput<T>& in, Mode mode, Rng& dropout_rng);
  /// Back-propagates d(loss)/d(logits) into the SC and, when trainable and
  /// fed raw features, the AE. The VE never receives gradients.
  void backward(const Tensor<T>& dlogits);

  /// Softmax probabilities in eval mode.
  Tensor<T> predict_proba(const ModelInput<T>& in);

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  std::optional<AcousticEncoder<T>> ae_;
  std::optional<VisualEncoder<T>> ve_;
  std::optional<SceneClassifier<T>> sc_;
  bool ae_trainable_ = false;
  bool ae_fed_raw_ = false;
  std::size_t ae_width_ = 0;
};

template <typename T>
std::unique_ptr<AVModel<T>> build_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace avjoint::model
