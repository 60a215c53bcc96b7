// SPDX-License-Identifier: Apache-2.0
#include "avjoint/model.hpp"

#include "avjoint/nn/checkpoint.hpp"

namespace avjoint::model {

SystemMode parse_system_mode(const std::string& s) {
  if (s == "audio_only" || s == "audio") return SystemMode::AudioOnly;
  if (s == "video_only" || s == "video") return SystemMode::VideoOnly;
  if (s == "av_pipeline" || s == "pipeline") return SystemMode::AvPipeline;
  if (s == "av_joint" || s == "joint") return SystemMode::AvJoint;
  throw InvalidConfig("unknown model mode '" + s + "'");
}

const char* to_string(SystemMode m) noexcept {
  switch (m) {
    case SystemMode::AudioOnly: return "audio_only";
    case SystemMode::VideoOnly: return "video_only";
    case SystemMode::AvPipeline: return "av_pipeline";
    case SystemMode::AvJoint: return "av_joint";
  }
  return "?";
}

void AcousticEncoderCfg::validate() const {
  if (channels.empty()) throw InvalidConfig("ae: empty channel plan");
  std::size_t prev = in_channels;
  for (auto c : channels) {
    if (c != 2 * prev) throw InvalidConfig("ae: channel plan must double at every block starting from the input channels");
    prev = c;
  }
  if (fc1 == 0 || fc2 == 0) throw InvalidConfig("ae: fc widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidConfig("ae: dropout must lie in [0, 1)");
  try {
    (void)conv_out_len();
  } catch (const InvalidInput&) {
    throw InvalidConfig("ae: in_bins=" + std::to_string(in_bins) + " is too small for " +
                        std::to_string(channels.size()) + " conv blocks");
  }
}

std::size_t AcousticEncoderCfg::conv_out_len() const {
  std::size_t len = in_bins;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    len = nn::conv_out_len(len, kernel, 0, 1);
    len = nn::conv_out_len(len, pool_kernel, pool_pad, pool_stride);
  }
  return len;
}

std::size_t AcousticEncoderCfg::concat_width() const {
  return channels.back() * conv_out_len() + (input_concat ? in_channels * in_bins : 0);
}

void VisualEncoderCfg::validate() const {
  if (channels.empty()) throw InvalidConfig("ve: empty channel plan");
  if (image_size < 1) throw InvalidConfig("ve: image_size must be positive");
}

std::size_t ModelConfig::sc_input_width() const noexcept {
  return (has_ae() ? ae.embed_dim() : 0) + (has_ve() ? ve.embed_dim() : 0);
}

// --- AcousticEncoder -----------------------------------------------------------

template <typename T>
AcousticEncoder<T>::AcousticEncoder(ParamStore<T>& store, const AcousticEncoderCfg& cfg)
    : cfg_(cfg), drop1_(cfg.dropout) {
  cfg_.validate();
  std::size_t cin = cfg_.in_channels;
  blocks_.reserve(cfg_.channels.size());
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const std::string p = "ae.block" + std::to_string(i);
    const std::size_t cout = cfg_.channels[i];
    Block b{nn::Conv1d<T>(store, p + ".conv", cin, cout, cfg_.kernel, 0, 1, ParamGroup::AE),
            nn::BatchNorm<T>(store, p + ".bn", cout, ParamGroup::AE),
            nn::ReLU<T>(),
            nn::AvgPool1d<T>(cfg_.pool_kernel, cfg_.pool_pad, cfg_.pool_stride),
            std::nullopt,
            nn::AvgPool1d<T>(cfg_.pool_kernel, cfg_.pool_pad, cfg_.pool_stride)};
    if (cfg_.residual_shortcut)
      b.shortcut.emplace(store, p + ".shortcut", cin, cout, cfg_.kernel, 0, 1, ParamGroup::AE);
    blocks_.push_back(std::move(b));
    cin = cout;
  }
  fc1_ = nn::Linear<T>(store, "ae.fc1", cfg_.concat_width(), cfg_.fc1, ParamGroup::AE);
  bn1_ = nn::BatchNorm<T>(store, "ae.bn1", cfg_.fc1, ParamGroup::AE);
  fc2_ = nn::Linear<T>(store, "ae.fc2", cfg_.fc1, cfg_.fc2, ParamGroup::AE);
  bn2_ = nn::BatchNorm<T>(store, "ae.bn2", cfg_.fc2, ParamGroup::AE);
}

template <typename T>
void AcousticEncoder<T>::init(Rng& rng) {
  for (auto& b : blocks_) {
    b.conv.init(rng);
    if (b.shortcut) b.shortcut->init(rng);
  }
  fc1_.init(rng);
  fc2_.init(rng);
}

template <typename T>
Tensor<T> AcousticEncoder<T>::forward(const Tensor<T>& x, Mode mode, Rng& dropout_rng) {
  if (x.rank() != 3 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.in_bins)
    throw InvalidInput("ae: expected N x " + std::to_string(cfg_.in_channels) + " x " +
                       std::to_string(cfg_.in_bins) + " features, got " + x.shape_string());
  const std::size_t n = x.dim(0);
  Tensor<T> h = x;
  for (auto& b : blocks_) {
    Tensor<T> m = b.pool.forward(b.relu.forward(b.bn.forward(b.conv.forward(h), mode)));
    if (b.shortcut) {
      const Tensor<T> s = b.shortcut_pool.forward(b.shortcut->forward(h));
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += s[i];
    }
    h = std::move(m);
  }
  conv_out_ = h;
  Tensor<T> flat = h;
  flat.reshape({n, h.size() / n});
  if (cfg_.input_concat) {
    Tensor<T> raw = x;
    raw.reshape({n, x.size() / n});
    flat = nn::concat_cols(flat, raw);
  }
  Tensor<T> z = drop1_.forward(relu1_.forward(bn1_.forward(fc1_.forward(flat), mode)), mode, dropout_rng);
  in_dims_ = x.dims();
  return relu2_.forward(bn2_.forward(fc2_.forward(z), mode));
}

template <typename T>
Tensor<T> AcousticEncoder<T>::backward(const Tensor<T>& dy) {
  if (in_dims_.empty()) throw InvalidState("ae: backward called without a forward cache");
  const std::size_t n = in_dims_[0];
  Tensor<T> dz = fc2_.backward(bn2_.backward(relu2_.backward(dy)));
  Tensor<T> dflat = fc1_.backward(bn1_.backward(relu1_.backward(drop1_.backward(dz))));
  Tensor<T> dx(in_dims_);
  Tensor<T> dh;
  if (cfg_.input_concat) {
    auto [dconv, draw] = nn::split_cols(dflat, conv_out_.size() / n);
    dh = std::move(dconv);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += draw[i];
  } else {
    dh = std::move(dflat);
  }
  dh.reshape(conv_out_.dims());
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto& b = blocks_[i];
    Tensor<T> dprev = b.conv.backward(b.bn.backward(b.relu.backward(b.pool.backward(dh))));
    if (b.shortcut) {
      const Tensor<T> ds = b.shortcut->backward(b.shortcut_pool.backward(dh));
      for (std::size_t k = 0; k < dprev.size(); ++k) dprev[k] += ds[k];
    }
    dh = std::move(dprev);
  }
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dh[i];
  return dx;
}

// --- VisualEncoder -------------------------------------------------------------

template <typename T>
VisualEncoder<T>::VisualEncoder(ParamStore<T>& store, const VisualEncoderCfg& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::size_t cin = 3;
  blocks_.reserve(cfg_.channels.size());
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const std::string p = "ve.block" + std::to_string(i);
    const std::size_t cout = cfg_.channels[i];
    blocks_.push_back(Block{nn::Conv2d<T>(store, p + ".conv", nn::Conv2dShape{cin, cout, 3, 3, 2, 2, 1, 1}, ParamGroup::VE),
                            nn::BatchNorm<T>(store, p + ".bn", cout, ParamGroup::VE), nn::ReLU<T>()});
    cin = cout;
  }
}

template <typename T>
void VisualEncoder<T>::init(Rng& rng) {
  for (auto& b : blocks_) b.conv.init(rng);
}

template <typename T>
Tensor<T> VisualEncoder<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.image_size || x.dim(3) != cfg_.image_size)
    throw InvalidInput("ve: expected N x 3 x " + std::to_string(cfg_.image_size) + " x " +
                       std::to_string(cfg_.image_size) + " images, got " + x.shape_string());
  Tensor<T> h = x;
  for (auto& b : blocks_) h = b.relu.forward(b.bn.forward(b.conv.forward(h), mode));
  return gap_.forward(h);
}

template <typename T>
Tensor<T> VisualEncoder<T>::backward(const Tensor<T>& dy) {
  Tensor<T> d = gap_.backward(dy);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto& b = blocks_[i];
    d = b.conv.backward(b.bn.backward(b.relu.backward(d)));
  }
  return d;
}

// --- SceneClassifier -----------------------------------------------------------

template <typename T>
SceneClassifier<T>::SceneClassifier(ParamStore<T>& store, std::size_t in_width, const SceneClassifierCfg& cfg)
    : in_width_(in_width),
      fc1_(store, "sc.fc1", in_width, cfg.hidden, ParamGroup::SC),
      bn1_(store, "sc.bn1", cfg.hidden, ParamGroup::SC),
      drop1_(cfg.dropout),
      fc2_(store, "sc.fc2", cfg.hidden, cfg.n_classes, ParamGroup::SC) {
  if (cfg.n_classes < 2) throw InvalidConfig("sc: need at least 2 classes");
  if (in_width == 0) throw InvalidConfig("sc: input width must be positive");
}

template <typename T>
void SceneClassifier<T>::init(Rng& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
}

template <typename T>
Tensor<T> SceneClassifier<T>::forward(const Tensor<T>& e, Mode mode, Rng& dropout_rng) {
  if (e.rank() != 2 || e.dim(1) != in_width_)
    throw InvalidInput("sc: expected N x " + std::to_string(in_width_) + " embeddings, got " + e.shape_string());
  return fc2_.forward(drop1_.forward(relu1_.forward(bn1_.forward(fc1_.forward(e), mode)), mode, dropout_rng));
}

template <typename T>
Tensor<T> SceneClassifier<T>::backward(const Tensor<T>& dlogits) {
  return fc1_.backward(bn1_.backward(relu1_.backward(drop1_.backward(fc2_.backward(dlogits)))));
}

// --- fusion / full model -------------------------------------------------------

template <typename T>
Tensor<T> fuse(const Tensor<T>& ae_emb, const Tensor<T>& ve_emb) {
  if (ae_emb.rank() != 2 || ve_emb.rank() != 2 || ae_emb.dim(0) != ve_emb.dim(0))
    throw InvalidInput("fuse: embeddings must be rank-2 with the same batch size");
  return nn::concat_cols(ae_emb, ve_emb);
}

template <typename T>
AVModel<T>::AVModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.has_ae()) ae_.emplace(store_, cfg_.ae);
  if (cfg_.has_ve()) ve_.emplace(store_, cfg_.ve);
  sc_.emplace(store_, cfg_.sc_input_width(), cfg_.sc);
  store_.set_frozen(ParamGroup::VE, true);
  set_ae_trainable(cfg_.mode == SystemMode::AudioOnly || cfg_.mode == SystemMode::AvJoint);
}

template <typename T>
void AVModel<T>::init(std::uint64_t seed) {
  if (ae_) {
    Rng r = make_rng(seed, SeedPurpose::Init, tag_hash("AE"));
    ae_->init(r);
  }
  if (ve_) {
    Rng r = make_rng(seed, SeedPurpose::Init, tag_hash("VE"));
    ve_->init(r);
  }
  Rng r = make_rng(seed, SeedPurpose::Init, tag_hash("SC"));
  sc_->init(r);
}

template <typename T>
bool AVModel<T>::ae_trainable() const noexcept {
  return ae_ && ae_trainable_;
}

template <typename T>
void AVModel<T>::set_ae_trainable(bool trainable) {
  ae_trainable_ = trainable;
  store_.set_frozen(ParamGroup::AE, !trainable);
}

template <typename T>
Tensor<T> AVModel<T>::encode_audio(const Tensor<T>& features, Mode mode, Rng& dropout_rng) {
  if (!ae_) throw InvalidState("model has no acoustic encoder");
  return ae_->forward(features, ae_trainable_ ? mode : Mode::Eval, dropout_rng);
}

template <typename T>
Tensor<T> AVModel<T>::encode_visual(const Tensor<T>& images) {
  if (!ve_) throw InvalidState("model has no visual encoder");
  return ve_->forward(images, Mode::Eval);
}

template <typename T>
Tensor<T> AVModel<T>::embed(const ModelInput<T>& in, Mode mode, Rng& dropout_rng) {
  Tensor<T> a, v;
  ae_fed_raw_ = false;
  if (cfg_.has_ae()) {
    if (in.audio_is_embedding) {
      if (in.audio.rank() != 2 || in.audio.dim(1) != cfg_.ae.embed_dim())
        throw InvalidInput("precomputed AE embedding has the wrong width");
      a = in.audio;
    } else {
      a = encode_audio(in.audio, mode, dropout_rng);
      ae_fed_raw_ = true;
    }
  }
  if (cfg_.has_ve()) {
    if (in.visual_is_embedding) {
      if (in.visual.rank() != 2 || in.visual.dim(1) != cfg_.ve.embed_dim())
        throw InvalidInput("precomputed VE embedding has the wrong width");
      v = in.visual;
    } else {
      v = encode_visual(in.visual);
    }
  }
  ae_width_ = a.empty() ? 0 : a.dim(1);
  if (!cfg_.has_ve()) return a;
  if (!cfg_.has_ae()) return v;
  return fuse(a, v);
}

template <typename T>
Tensor<T> AVModel<T>::forward(const ModelInput<T>& in, Mode mode, Rng& dropout_rng) {
  return sc_->forward(embed(in, mode, dropout_rng), mode, dropout_rng);
}

template <typename T>
void AVModel<T>::backward(const Tensor<T>& dlogits) {
  Tensor<T> de = sc_->backward(dlogits);
  if (!ae_ || !ae_trainable_ || !ae_fed_raw_) return;
  if (cfg_.has_ve()) de = nn::split_cols(de, ae_width_).first;
  ae_->backward(de);
}

template <typename T>
Tensor<T> AVModel<T>::predict_proba(const ModelInput<T>& in) {
  Rng unused(0);
  return nn::softmax(forward(in, Mode::Eval, unused));
}

template <typename T>
void AVModel<T>::save(const std::filesystem::path& path) const {
  nn::save_weights(path, store_);
}

template <typename T>
void AVModel<T>::load(const std::filesystem::path& path) {
  nn::load_weights(path, store_, true);
}

template <typename T>
std::unique_ptr<AVModel<T>> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  auto m = std::make_unique<AVModel<T>>(cfg);
  m->init(seed);
  return m;
}

template class AcousticEncoder<float>;
template class AcousticEncoder<double>;
template class VisualEncoder<float>;
template class VisualEncoder<double>;
template class SceneClassifier<float>;
template class SceneClassifier<double>;
template class AVModel<float>;
template class AVModel<double>;
template Tensor<float> fuse<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse<double>(const Tensor<double>&, const Tensor<double>&);
template std::unique_ptr<AVModel<float>> build_model<float>(const ModelConfig&, std::uint64_t);
template std::unique_ptr<AVModel<double>> build_model<double>(const ModelConfig&, std::uint64_t);

}  // namespace avjoint::model
