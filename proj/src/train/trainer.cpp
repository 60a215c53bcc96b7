// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "avjoint/nn/checkpoint.hpp"
#include "train/frames.hpp"

namespace avjoint::train {

using detail::FrameRef;

void TrainLog::add(const EpochRecord& r) {
  records.push_back(r);
  if (on_epoch) on_epoch(r);
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["val_acc"] = r.val_acc;
    j["wall_ms"] = r.wall_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset load_dataset(const data::Manifest& m, const dsp::FeatureExtractor& fx, const data::LoadOptions& opts) {
  m.validate();
  Dataset ds;
  ds.class_names = m.class_names;
  ds.train = data::load_clips(m, data::Split::Train, fx, opts);
  ds.val = data::load_clips(m, data::Split::Val, fx, opts);
  ds.test = data::load_clips(m, data::Split::Test, fx, opts);
  return ds;
}

model::ModelConfig model_config_for(const model::ModelConfig& base, Strategy s) {
  model::ModelConfig mc = base;
  switch (s) {
    case Strategy::Joint: mc.mode = model::SystemMode::AvJoint; break;
    case Strategy::Pipeline: mc.mode = model::SystemMode::AvPipeline; break;
    case Strategy::AudioOnly: mc.mode = model::SystemMode::AudioOnly; break;
    case Strategy::VideoOnly: mc.mode = model::SystemMode::VideoOnly; break;
  }
  return mc;
}

namespace {

constexpr std::size_t kEvalBatch = 256;

std::uint64_t stream_seed(std::uint64_t root, SeedPurpose purpose, const std::string& tag, std::uint64_t a,
                          std::uint64_t b = 0) {
  return derive_seed(derive_seed(root, purpose, tag_hash(tag.c_str()), a), purpose, b);
}

void check_dataset(const Dataset& ds, const model::ModelConfig& mc) {
  if (ds.train.empty()) throw InvalidInput("dataset has no training clips");
  if (ds.val.empty()) throw InvalidInput("dataset has no validation clips (run `avjoint split` first)");
  if (ds.num_classes() < 2) throw InvalidInput("dataset needs at least 2 classes");
  if (mc.has_ae()) {
    const std::size_t bins = ds.train.front().frames.empty() ? 0 : ds.train.front().frames.front().bins;
    if (bins != mc.ae.in_bins)
      throw InvalidConfig("features have " + std::to_string(bins) + " bins but the acoustic encoder expects " +
                          std::to_string(mc.ae.in_bins));
  }
}

std::unique_ptr<AVModel<float>> make_model(const TrainContext& ctx, model::SystemMode mode) {
  model::ModelConfig mc = ctx.model_cfg;
  mc.mode = mode;
  mc.sc.n_classes = ctx.ds->num_classes();
  check_dataset(*ctx.ds, mc);
  auto m = model::build_model<float>(mc, ctx.cfg.seed);
  if (mc.has_ve()) {
    if (!ctx.ve_weights) throw InvalidState("visual encoder weights were not resolved");
    m->params().copy_values_from(*ctx.ve_weights, "ve.");
  }
  return m;
}

enum class AudioSrc { None, Raw, Embedding };
enum class VisualSrc { None, Raw, Embedding };

// Precomputed inputs of one split.
struct SplitInputs {
  std::vector<FrameRef> refs;
  std::vector<float> ae_emb, ve_emb;
};

struct StagePlan {
  std::string tag;
  AudioSrc audio = AudioSrc::None;
  VisualSrc visual = VisualSrc::None;
  bool augment = false;
};

model::ModelInput<float> build_input(AVModel<float>& m, const SplitInputs& s, const std::vector<std::size_t>& idx,
                                     AudioSrc audio, VisualSrc visual, const data::AugmentConfig* aug,
                                     const detail::RngFor& rng_for) {
  model::ModelInput<float> in;
  if (audio == AudioSrc::Raw) {
    in.audio = detail::gather_audio(s.refs, idx);
  } else if (audio == AudioSrc::Embedding) {
    in.audio = detail::gather_rows(s.ae_emb, m.config().ae.embed_dim(), idx);
    in.audio_is_embedding = true;
  }
  if (visual == VisualSrc::Raw) {
    in.visual = detail::gather_images(s.refs, idx, aug, rng_for);
  } else if (visual == VisualSrc::Embedding) {
    in.visual = detail::gather_rows(s.ve_emb, m.config().ve.embed_dim(), idx);
    in.visual_is_embedding = true;
  }
  return in;
}

SplitInputs prepare(AVModel<float>& m, const std::vector<data::Clip>& clips, bool need_ae, bool need_ve) {
  SplitInputs s;
  s.refs = detail::frame_refs(clips);
  if (need_ae) s.ae_emb = detail::encode_audio_all(m, s.refs, kEvalBatch);
  if (need_ve)
    s.ve_emb = detail::encode_visual_all([&m](const Tensor<float>& x) { return m.encode_visual(x); },
                                         m.config().ve.embed_dim(), s.refs, kEvalBatch);
  return s;
}

EvalReport validate(AVModel<float>& m, const SplitInputs& val, AudioSrc audio, VisualSrc visual,
                    const std::vector<std::string>& class_names) {
  std::vector<FramePrediction> preds;
  preds.reserve(val.refs.size());
  Rng unused(0);
  for (const auto& b : detail::sequential_batches(val.refs.size(), kEvalBatch)) {
    const auto logits = m.forward(build_input(m, val, b, audio, visual, nullptr, {}), nn::Mode::Eval, unused);
    const std::size_t k = logits.dim(1);
    for (std::size_t r = 0; r < b.size(); ++r) {
      const auto& ref = val.refs[b[r]];
      preds.push_back({ref.clip->clip_id, ref.clip->label, ref.features().frame_center_time,
                       detail::softmax_row(logits.data() + r * k, k)});
    }
  }
  return evaluate_frames(preds, class_names);
}

// Trains whatever is trainable in `m` under `plan`; restores the best
// validation snapshot before returning.
TrainResult run_stage(std::unique_ptr<AVModel<float>> m, const TrainContext& ctx, const StagePlan& plan) {
  const TrainConfig& cfg = ctx.cfg;
  cfg.validate();
  const Dataset& ds = *ctx.ds;

  // Frozen encoders never change, so their outputs are computed once.
  const bool ae_pre = plan.audio == AudioSrc::Embedding;
  const bool ve_pre = plan.visual == VisualSrc::Embedding;
  SplitInputs train = prepare(*m, ds.train, ae_pre, ve_pre);
  const AudioSrc val_audio = plan.audio;
  const VisualSrc val_visual = plan.visual == VisualSrc::None ? VisualSrc::None : VisualSrc::Embedding;
  SplitInputs val = prepare(*m, ds.val, ae_pre, val_visual == VisualSrc::Embedding);

  const std::size_t n = train.refs.size();
  const std::size_t nb = (n + cfg.batch_size - 1) / cfg.batch_size;
  Sgd<float> opt(cfg.momentum);
  m->params().zero_grad();

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<float>> best;
  std::size_t bad = 0;
  const data::AugmentConfig* aug = plan.augment ? &cfg.augment : nullptr;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = data::batches(n, cfg.batch_size, stream_seed(cfg.seed, SeedPurpose::Shuffle, plan.tag, epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < order.size(); ++bi) {
      const auto& idx = order[bi];
      if (idx.size() < 2) continue;  // batch norm needs two samples
      const double lr = lr_at(static_cast<double>(epoch) + static_cast<double>(bi) / static_cast<double>(nb), cfg);
      const auto rng_for = [&](std::size_t sample) {
        return Rng(stream_seed(cfg.seed, SeedPurpose::Augment, plan.tag, epoch, sample));
      };
      const auto in = build_input(*m, train, idx, plan.audio, plan.visual, aug, rng_for);
      Rng drop(stream_seed(cfg.seed, SeedPurpose::Dropout, plan.tag, epoch, bi));
      const auto labels = detail::labels_of(train.refs, idx);
      nn::CrossEntropyResult<float> ce;
      try {
        ce = nn::softmax_cross_entropy(m->forward(in, nn::Mode::Train, drop), labels);
      } catch (const NumericalError& e) {
        throw TrainingError("stage '" + plan.tag + "' diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(bi + 1) + ": " + e.what());
      }
      if (!std::isfinite(ce.loss))
        throw TrainingError("stage '" + plan.tag + "' produced a non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(bi + 1));
      m->backward(nn::softmax_cross_entropy_backward(ce.probs, labels));
      opt.step(m->params(), lr);
      loss_sum += static_cast<double>(ce.loss) * static_cast<double>(idx.size());
      seen += idx.size();
    }
    const EvalReport vr = validate(*m, val, val_audio, val_visual, ds.class_names);

    EpochRecord rec;
    rec.stage = plan.tag;
    rec.epoch = epoch + 1;
    rec.lr = lr_at(static_cast<double>(epoch), cfg);
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.val_loss = vr.avg_logloss;
    rec.val_acc = vr.avg_accuracy;
    if (cfg.log_wall_ms)
      rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    if (ctx.log) ctx.log->add(rec);
    res.epochs_run = epoch + 1;

    if (vr.avg_logloss < res.best_val_loss) {
      res.best_val_loss = vr.avg_logloss;
      res.best_epoch = epoch + 1;
      best = m->params().snapshot();
      bad = 0;
    } else if (++bad >= cfg.patience) {
      break;
    }
  }
  if (!best.empty()) m->params().restore(best);
  m->params().zero_grad();
  res.model = std::move(m);
  return res;
}

TrainResult train_cell(const TrainContext& ctx, InputKind ik, AeMode am, const AVModel<float>* audio_model,
                       const std::string& tag) {
  auto m = make_model(ctx, am == AeMode::Trainable ? model::SystemMode::AvJoint : model::SystemMode::AvPipeline);
  if (audio_model) m->params().copy_values_from(audio_model->params(), "ae.");
  StagePlan plan;
  plan.tag = tag;
  plan.audio = am == AeMode::Trainable ? AudioSrc::Raw : AudioSrc::Embedding;
  plan.visual = ik == InputKind::Embedding ? VisualSrc::Embedding : VisualSrc::Raw;
  plan.augment = ik == InputKind::RawImage;
  return run_stage(std::move(m), ctx, plan);
}

TrainContext with_ve(const TrainContext& ctx) {
  TrainContext c = ctx;
  if (!c.ve_weights) c.ve_weights = resolve_visual_encoder(ctx);
  return c;
}

}  // namespace

std::unique_ptr<ParamStore<float>> pretrain_visual_encoder(const Dataset& ds, const model::VisualEncoderCfg& ve,
                                                           const TrainConfig& cfg) {
  cfg.validate();
  if (ds.train.empty()) throw InvalidInput("visual pre-training needs training clips");
  const std::size_t k = ds.num_classes();

  ParamStore<float> work;
  model::VisualEncoder<float> enc(work, ve);
  nn::Linear<float> head(work, "vehead.fc", ve.embed_dim(), k, nn::ParamGroup::SC);
  {
    Rng r = make_rng(cfg.seed, SeedPurpose::Init, tag_hash("VE"));
    enc.init(r);
    Rng h = make_rng(cfg.seed, SeedPurpose::VePretrain, tag_hash("head"));
    head.init(h);
  }

  // One sample per distinct image.
  std::vector<FrameRef> refs;
  for (const auto& c : ds.train) {
    std::vector<bool> used(c.images.size(), false);
    for (std::size_t f = 0; f < c.frames.size(); ++f) {
      const auto i = c.frame_to_image.at(f);
      if (!used[i]) {
        used[i] = true;
        refs.push_back({&c, f});
      }
    }
  }

  const std::size_t n = refs.size();
  const std::size_t nb = (n + cfg.batch_size - 1) / cfg.batch_size;
  Sgd<float> opt(cfg.momentum);
  work.zero_grad();
  for (std::size_t epoch = 0; epoch < cfg.ve_pretrain_epochs; ++epoch) {
    const auto order = data::batches(n, cfg.batch_size, stream_seed(cfg.seed, SeedPurpose::VePretrain, "shuffle", epoch));
    for (std::size_t bi = 0; bi < order.size(); ++bi) {
      const auto& idx = order[bi];
      if (idx.size() < 2) continue;
      const auto rng_for = [&](std::size_t sample) {
        return Rng(stream_seed(cfg.seed, SeedPurpose::VePretrain, "augment", epoch, sample));
      };
      const auto x = detail::gather_images(refs, idx, &cfg.augment, rng_for);
      const auto labels = detail::labels_of(refs, idx);
      const auto ce = nn::softmax_cross_entropy(head.forward(enc.forward(x, nn::Mode::Train)), labels);
      if (!std::isfinite(ce.loss))
        throw TrainingError("visual pre-training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(bi + 1));
      enc.backward(head.backward(nn::softmax_cross_entropy_backward(ce.probs, labels)));
      opt.step(work,
               lr_at(static_cast<double>(epoch) + static_cast<double>(bi) / static_cast<double>(nb), cfg));
    }
  }

  auto out = std::make_unique<ParamStore<float>>();
  model::VisualEncoder<float> keep(*out, ve);
  out->copy_values_from(work, "ve.");
  out->set_frozen(nn::ParamGroup::VE, true);
  return out;
}

std::shared_ptr<const ParamStore<float>> resolve_visual_encoder(const TrainContext& ctx) {
  if (ctx.ve_weights) return ctx.ve_weights;
  const auto& ve = ctx.model_cfg.ve;
  if (!ve.weights_path.empty()) {
    auto store = std::make_shared<ParamStore<float>>();
    model::VisualEncoder<float> enc(*store, ve);
    nn::load_weights(ve.weights_path, *store, true);
    return store;
  }
  return pretrain_visual_encoder(*ctx.ds, ve, ctx.cfg);
}

TrainResult train_audio_only(const TrainContext& ctx) {
  auto m = make_model(ctx, model::SystemMode::AudioOnly);
  StagePlan plan{"audio", AudioSrc::Raw, VisualSrc::None, false};
  return run_stage(std::move(m), ctx, plan);
}

TrainResult train_video_only(const TrainContext& ctx) {
  const TrainContext c = with_ve(ctx);
  auto m = make_model(c, model::SystemMode::VideoOnly);
  StagePlan plan;
  plan.tag = "video";
  plan.visual = c.cfg.input_kind == InputKind::Embedding ? VisualSrc::Embedding : VisualSrc::Raw;
  plan.augment = c.cfg.input_kind == InputKind::RawImage;
  return run_stage(std::move(m), c, plan);
}

TrainResult train_joint(const TrainContext& ctx) {
  return train_cell(with_ve(ctx), InputKind::RawImage, AeMode::Trainable, nullptr, "joint");
}

TrainResult train_pipeline_stage2(const TrainContext& ctx, const AVModel<float>& audio_model) {
  return train_cell(with_ve(ctx), InputKind::Embedding, AeMode::Pretrained, &audio_model, "pipeline");
}

TrainResult train_pipeline(const TrainContext& ctx) {
  const TrainContext c = with_ve(ctx);
  const TrainResult stage1 = train_audio_only(c);
  return train_pipeline_stage2(c, *stage1.model);
}

TrainResult train(const TrainContext& ctx) {
  if (!ctx.ds) throw InvalidState("training context has no dataset");
  switch (ctx.cfg.strategy) {
    case Strategy::Joint: {
      if (ctx.cfg.input_kind == InputKind::RawImage && ctx.cfg.ae_mode == AeMode::Trainable) return train_joint(ctx);
      const TrainContext c = with_ve(ctx);
      const TrainResult stage1 = train_audio_only(c);
      if (ctx.cfg.input_kind == InputKind::Embedding && ctx.cfg.ae_mode == AeMode::Pretrained)
        return train_pipeline_stage2(c, *stage1.model);
      return train_cell(c, ctx.cfg.input_kind, ctx.cfg.ae_mode, stage1.model.get(),
                        ctx.cfg.input_kind == InputKind::Embedding ? "ablation-II" : "ablation-III");
    }
    case Strategy::Pipeline: return train_pipeline(ctx);
    case Strategy::AudioOnly: return train_audio_only(ctx);
    case Strategy::VideoOnly: return train_video_only(ctx);
  }
  throw InvalidConfig("unknown strategy");
}

std::array<AblationCell, 4> run_ablation(const TrainContext& ctx) {
  if (!ctx.ds) throw InvalidState("training context has no dataset");
  const TrainContext c = with_ve(ctx);
  const TrainResult audio = train_audio_only(c);

  std::array<AblationCell, 4> cells{{{"I", InputKind::Embedding, AeMode::Pretrained, {}, {}},
                                     {"II", InputKind::Embedding, AeMode::Trainable, {}, {}},
                                     {"III", InputKind::RawImage, AeMode::Pretrained, {}, {}},
                                     {"IV", InputKind::RawImage, AeMode::Trainable, {}, {}}}};
  cells[0].result = train_pipeline_stage2(c, *audio.model);
  cells[1].result = train_cell(c, InputKind::Embedding, AeMode::Trainable, audio.model.get(), "ablation-II");
  cells[2].result = train_cell(c, InputKind::RawImage, AeMode::Pretrained, audio.model.get(), "ablation-III");
  cells[3].result = train_joint(c);
  for (auto& cell : cells) cell.report = evaluate(*cell.result.model, c.ds->test, c.ds->class_names);
  return cells;
}

}  // namespace avjoint::train
