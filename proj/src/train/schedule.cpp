// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "avjoint/train.hpp"

namespace avjoint::train {

Strategy parse_strategy(const std::string& s) {
  if (s == "joint") return Strategy::Joint;
  if (s == "pipeline") return Strategy::Pipeline;
  if (s == "audio" || s == "audio_only") return Strategy::AudioOnly;
  if (s == "video" || s == "video_only") return Strategy::VideoOnly;
  throw InvalidConfig("unknown strategy '" + s + "' (expected joint|pipeline|audio|video)");
}

const char* to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Joint: return "joint";
    case Strategy::Pipeline: return "pipeline";
    case Strategy::AudioOnly: return "audio";
    case Strategy::VideoOnly: return "video";
  }
  return "?";
}

InputKind parse_input_kind(const std::string& s) {
  if (s == "embedding") return InputKind::Embedding;
  if (s == "raw_image" || s == "raw") return InputKind::RawImage;
  throw InvalidConfig("unknown input kind '" + s + "' (expected embedding|raw_image)");
}

const char* to_string(InputKind k) noexcept { return k == InputKind::Embedding ? "embedding" : "raw_image"; }

AeMode parse_ae_mode(const std::string& s) {
  if (s == "pretrained") return AeMode::Pretrained;
  if (s == "trainable") return AeMode::Trainable;
  throw InvalidConfig("unknown ae mode '" + s + "' (expected pretrained|trainable)");
}

const char* to_string(AeMode m) noexcept { return m == AeMode::Pretrained ? "pretrained" : "trainable"; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidConfig("train.batch_size must be >= 1");
  if (max_epochs < 1) throw InvalidConfig("train.max_epochs must be >= 1");
  if (!(lr_min < lr_max) || !(lr_min >= 0.0)) throw InvalidConfig("need 0 <= train.lr_min < train.lr_max");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidConfig("train.momentum must lie in [0, 1)");
  if (!(restart_t0 > 0.0)) throw InvalidConfig("train.restart_t0 must be positive");
  if (!(restart_mult >= 1.0)) throw InvalidConfig("train.restart_mult must be >= 1");
  augment.validate();
}

CyclePos cycle_position(double epoch_progress, const TrainConfig& cfg) {
  CyclePos p;
  double t = epoch_progress < 0.0 ? 0.0 : epoch_progress;
  double ti = cfg.restart_t0;
  if (cfg.restart_mult == 1.0) {
    const double k = std::floor(t / ti);
    p.cycle = static_cast<std::size_t>(k);
    p.t_cur = t - k * ti;
    p.t_i = ti;
    return p;
  }
  while (t >= ti) {
    t -= ti;
    ti *= cfg.restart_mult;
    ++p.cycle;
  }
  p.t_cur = t;
  p.t_i = ti;
  return p;
}

double lr_at(double epoch_progress, const TrainConfig& cfg) {
  const CyclePos p = cycle_position(epoch_progress, cfg);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * p.t_cur / p.t_i));
}

template <typename T>
void sgd_step(ParamStore<T>& store, std::vector<Tensor<T>>& velocity, double lr, double momentum) {
  if (velocity.size() < store.size()) velocity.resize(store.size());
  const T mu = static_cast<T>(momentum), eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (p.buffer) continue;
    if (p.trainable()) {
      if (!p.grad.same_shape(p.value))
        throw InvalidState("gradient shape " + p.grad.shape_string() + " does not match '" + p.name + "'");
      auto& v = velocity[i];
      if (v.empty() && !p.value.empty()) v = Tensor<T>(p.value.dims());
      if (!v.same_shape(p.value)) throw InvalidState("velocity shape does not match '" + p.name + "'");
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = mu * v[k] + p.grad[k];
        p.value[k] -= eta * v[k];
      }
    }
    p.grad.fill(T(0));
  }
}

template <typename T>
void Sgd<T>::step(ParamStore<T>& store, double lr) {
  sgd_step(store, velocity_, lr, momentum_);
}

template void sgd_step<float>(ParamStore<float>&, std::vector<Tensor<float>>&, double, double);
template void sgd_step<double>(ParamStore<double>&, std::vector<Tensor<double>>&, double, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace avjoint::train
