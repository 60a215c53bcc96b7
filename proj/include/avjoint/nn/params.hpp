// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "avjoint/nn/tensor.hpp"

namespace avjoint::nn {

enum class ParamGroup : std::uint8_t { AE = 0, VE = 1, SC = 2 };

const char* to_string(ParamGroup g) noexcept;

/// A named tensor with its gradient. Buffers (BN running statistics) carry
/// no gradient and are never touched by the optimizer.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  ParamGroup group = ParamGroup::SC;
  bool frozen = false;
  bool buffer = false;

  bool trainable() const noexcept { return !frozen && !buffer; }
};

/// Owns every parameter of a model. Entries live behind stable pointers so
/// layers can keep `Param*` handles across moves of the store.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(std::string name, std::vector<std::size_t> dims, ParamGroup group, bool buffer = false) {
    if (find(name)) throw InvalidState("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Param<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(dims);
    if (!buffer) p->grad = Tensor<T>(dims);
    p->group = group;
    p->buffer = buffer;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param<T>* find(const std::string& name) noexcept {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Param<T>* find(const std::string& name) const noexcept {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t size() const noexcept { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return *params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *params_[i]; }

  void set_frozen(ParamGroup g, bool frozen) {
    for (auto& p : params_)
      if (p->group == g) p->frozen = frozen;
  }

  void zero_grad() {
    for (auto& p : params_)
      if (!p->buffer) p->grad.fill(T(0));
  }

  bool has_group(ParamGroup g) const noexcept {
    for (const auto& p : params_)
      if (p->group == g) return true;
    return false;
  }

  /// Groups owning at least one trainable (non-frozen, non-buffer) entry.
  std::set<ParamGroup> trainable_groups() const {
    std::set<ParamGroup> out;
    for (const auto& p : params_)
      if (p->trainable()) out.insert(p->group);
    return out;
  }
  std::set<ParamGroup> frozen_groups() const {
    std::set<ParamGroup> out;
    for (const auto& p : params_)
      if (!p->buffer && p->frozen) out.insert(p->group);
    return out;
  }

  /// Copies of every value tensor, in store order.
  std::vector<Tensor<T>> snapshot() const {
    std::vector<Tensor<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }
  void restore(const std::vector<Tensor<T>>& snap) {
    if (snap.size() != params_.size()) throw InvalidState("snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (!snap[i].same_shape(params_[i]->value)) throw InvalidState("snapshot shape mismatch for " + params_[i]->name);
      params_[i]->value = snap[i];
    }
  }

  /// Copies values of entries whose names start with `prefix` from `other`.
  void copy_values_from(const ParamStore& other, const std::string& prefix) {
    for (auto& p : params_) {
      if (p->name.rfind(prefix, 0) != 0) continue;
      const Param<T>* src = other.find(p->name);
      if (!src) throw InvalidState("source store lacks '" + p->name + "'");
      if (!src->value.same_shape(p->value)) throw InvalidState("shape mismatch for '" + p->name + "'");
      p->value = src->value;
    }
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
};

}  // namespace avjoint::nn
