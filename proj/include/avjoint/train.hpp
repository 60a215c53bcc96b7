// SPDX-License-Identifier: Apache-2.0
//
// Training strategies (joint, pipeline, single-modality), the SGD +
// warm-restart optimizer, the 2x2 ablation grid and segment-level
// evaluation.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "avjoint/data.hpp"
#include "avjoint/model.hpp"

namespace avjoint::train {

using model::AVModel;
using nn::ParamStore;
using nn::Tensor;

enum class Strategy { Joint, Pipeline, AudioOnly, VideoOnly };
enum class InputKind { Embedding, RawImage };
enum class AeMode { Pretrained, Trainable };

Strategy parse_strategy(const std::string& s);
const char* to_string(Strategy s) noexcept;
InputKind parse_input_kind(const std::string& s);
const char* to_string(InputKind k) noexcept;
AeMode parse_ae_mode(const std::string& s);
const char* to_string(AeMode m) noexcept;

struct TrainConfig {
  Strategy strategy = Strategy::Joint;
  InputKind input_kind = InputKind::RawImage;
  AeMode ae_mode = AeMode::Trainable;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 150;
  double lr_max = 1e-2;
  double lr_min = 1e-5;
  double momentum = 0.9;
  double restart_t0 = 10.0;
  double restart_mult = 2.0;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  bool log_wall_ms = false;
  std::size_t ve_pretrain_epochs = 8;
  data::AugmentConfig augment;

  void validate() const;
};

/// Cosine-annealed learning rate with warm restarts; `epoch_progress` is
/// fractional (epochs completed so far).
double lr_at(double epoch_progress, const TrainConfig& cfg);

/// Index of the restart cycle containing `epoch_progress` and the position
/// inside it: {cycle, t_cur, t_i}.
struct CyclePos {
  std::size_t cycle = 0;
  double t_cur = 0.0;
  double t_i = 0.0;
};
CyclePos cycle_position(double epoch_progress, const TrainConfig& cfg);

/// SGD with heavy-ball momentum over a ParamStore. Velocity buffers are
/// allocated lazily and keyed by store position.
template <typename T>
class Sgd {
 public:
  explicit Sgd(double momentum) : momentum_(momentum) {}
  /// v <- mu v + g; theta <- theta - lr v for trainable entries, then clears gradients.
  void step(ParamStore<T>& store, double lr);
  void reset() { velocity_.clear(); }

 private:
  double momentum_;
  std::vector<Tensor<T>> velocity_;
};

template <typename T>
void sgd_step(ParamStore<T>& store, std::vector<Tensor<T>>& velocity, double lr, double momentum);

// --- data ------------------------------------------------------------------------

/// Loaded clips for every split plus the class list.
struct Dataset {
  std::vector<std::string> class_names;
  std::vector<data::Clip> train, val, test;

  std::size_t num_classes() const noexcept { return class_names.size(); }
};

Dataset load_dataset(const data::Manifest& m, const dsp::FeatureExtractor& fx, const data::LoadOptions& opts);

// --- log -------------------------------------------------------------------------

struct EpochRecord {
  std::string stage;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::int64_t wall_ms = 0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::function<void(const EpochRecord&)> on_epoch;

  void add(const EpochRecord& r);
  /// One JSON object per line.
  std::string to_jsonl() const;
};

// --- evaluation ------------------------------------------------------------------

/// Probability row of one acoustic frame.
struct FramePrediction {
  std::string clip_id;
  int label = 0;
  double center_time = 0.0;
  std::vector<double> probs;
};

struct SegmentResult {
  std::string clip_id;
  std::size_t segment = 0;
  int label = 0;
  std::size_t n_frames = 0;
  std::vector<double> probs;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<double> per_class_logloss;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_segments;
  double avg_logloss = 0.0;
  double avg_accuracy = 0.0;
  std::size_t n_segments = 0;
  std::vector<SegmentResult> segments;
};

/// Groups frames into 1-second segments (floor of the center time per clip),
/// averages their rows and computes class-wise log-loss / accuracy.
EvalReport evaluate_frames(const std::vector<FramePrediction>& frames, const std::vector<std::string>& class_names);

/// Mean of rows, computed as first + mean(row - first) so identical rows
/// average exactly.
std::vector<double> mean_rows(const std::vector<const std::vector<double>*>& rows);

/// Lowest index wins ties.
std::size_t argmax(const std::vector<double>& p) noexcept;

/// Eval-mode frame probabilities for every frame of `clips`.
std::vector<FramePrediction> predict_frames(AVModel<float>& model, const std::vector<data::Clip>& clips,
                                            std::size_t batch_size = 256);

EvalReport evaluate(AVModel<float>& model, const std::vector<data::Clip>& clips,
                    const std::vector<std::string>& class_names, std::size_t batch_size = 256);

void write_report(std::ostream& os, const EvalReport& r);
void write_report(const std::filesystem::path& path, const EvalReport& r);

/// Segment-averaged embeddings as TSV: clip_id, segment, label, e_*, ae_*, ve_*.
void export_embeddings(AVModel<float>& model, const std::vector<data::Clip>& clips,
                       const std::vector<std::string>& class_names, const std::filesystem::path& path);

// --- training --------------------------------------------------------------------

/// Trains a VE plus a temporary linear head on the video-only task of the
/// training clips, then drops the head. Returns a store holding only "ve.*".
std::unique_ptr<ParamStore<float>> pretrain_visual_encoder(const Dataset& ds, const model::VisualEncoderCfg& ve,
                                                           const TrainConfig& cfg);

struct TrainResult {
  std::unique_ptr<AVModel<float>> model;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

/// Shared pieces reused across strategies and ablation cells.
struct TrainContext {
  const Dataset* ds = nullptr;
  model::ModelConfig model_cfg;
  TrainConfig cfg;
  TrainLog* log = nullptr;
  std::shared_ptr<const ParamStore<float>> ve_weights;  // "ve.*" entries
};

/// Resolves the VE weights for `ctx`: loads model_cfg.ve.weights_path when
/// set, otherwise runs synthetic pre-training.
std::shared_ptr<const ParamStore<float>> resolve_visual_encoder(const TrainContext& ctx);

/// Audio-only system (AE + SC over acoustic frames).
TrainResult train_audio_only(const TrainContext& ctx);
/// Video-only system (frozen VE + SC over image embeddings).
TrainResult train_video_only(const TrainContext& ctx);
/// AE and SC trained together on augmented raw images through the frozen VE.
TrainResult train_joint(const TrainContext& ctx);
/// Audio-only stage, then a fresh SC over precomputed frozen embeddings.
TrainResult train_pipeline(const TrainContext& ctx);
/// Second pipeline stage given an already trained audio-only model.
TrainResult train_pipeline_stage2(const TrainContext& ctx, const AVModel<float>& audio_model);

/// Dispatches on ctx.cfg.strategy.
TrainResult train(const TrainContext& ctx);

struct AblationCell {
  std::string label;  // "I".."IV"
  InputKind input_kind;
  AeMode ae_mode;
  TrainResult result;
  EvalReport report;
};

/// The 2x2 grid {embedding, raw image} x {pretrained, trainable AE}.
std::array<AblationCell, 4> run_ablation(const TrainContext& ctx);

/// Trainable / frozen group sets for a strategy, for introspection.
model::ModelConfig model_config_for(const model::ModelConfig& base, Strategy s);

}  // namespace avjoint::train
