// SPDX-License-Identifier: Apache-2.0
#include "train/frames.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

namespace avjoint::train::detail {

const data::ImageTensor& FrameRef::image() const {
  if (clip->images.empty()) throw InvalidInput("clip '" + clip->clip_id + "' has no images");
  return *clip->images[clip->frame_to_image.at(frame)];
}

std::vector<FrameRef> frame_refs(const std::vector<data::Clip>& clips) {
  std::vector<FrameRef> out;
  for (const auto& c : clips)
    for (std::size_t f = 0; f < c.frames.size(); ++f) out.push_back({&c, f});
  return out;
}

std::vector<int> labels_of(const std::vector<FrameRef>& refs, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(refs[i].clip->label);
  return out;
}

Tensor<float> gather_audio(const std::vector<FrameRef>& refs, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw InvalidInput("empty batch");
  const std::size_t bins = refs[idx[0]].features().bins;
  Tensor<float> x({idx.size(), 2, bins});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& fm = refs[idx[r]].features();
    if (fm.bins != bins || fm.data.size() != 2 * bins)
      throw InvalidInput("inconsistent feature width in clip '" + fm.clip_id + "'");
    std::memcpy(x.data() + r * 2 * bins, fm.data.data(), 2 * bins * sizeof(float));
  }
  return x;
}

Tensor<float> gather_images(const std::vector<FrameRef>& refs, const std::vector<std::size_t>& idx,
                            const data::AugmentConfig* aug, const RngFor& rng_for) {
  if (idx.empty()) throw InvalidInput("empty batch");
  const auto& first = refs[idx[0]].image();
  const std::size_t c = first.channels, h = first.height, w = first.width, sz = c * h * w;
  Tensor<float> x({idx.size(), c, h, w});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& img = refs[idx[r]].image();
    if (img.channels != c || img.height != h || img.width != w)
      throw InvalidInput("inconsistent image shape in clip '" + img.clip_id + "'");
    if (aug && aug->enabled) {
      Rng rng = rng_for(idx[r]);
      const auto a = data::augment_image(img, *aug, rng);
      std::memcpy(x.data() + r * sz, a.data.data(), sz * sizeof(float));
    } else {
      std::memcpy(x.data() + r * sz, img.data.data(), sz * sizeof(float));
    }
  }
  return x;
}

Tensor<float> gather_rows(const std::vector<float>& table, std::size_t width, const std::vector<std::size_t>& idx) {
  Tensor<float> x({idx.size(), width});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::memcpy(x.data() + r * width, table.data() + idx[r] * width, width * sizeof(float));
  return x;
}

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    std::vector<std::size_t> b;
    for (std::size_t i = s; i < std::min(n, s + batch); ++i) b.push_back(i);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<float> encode_audio_all(AVModel<float>& model, const std::vector<FrameRef>& refs, std::size_t batch) {
  const std::size_t width = model.config().ae.embed_dim();
  std::vector<float> out(refs.size() * width);
  Rng unused(0);
  for (const auto& b : sequential_batches(refs.size(), batch)) {
    const auto e = model.encode_audio(gather_audio(refs, b), nn::Mode::Eval, unused);
    std::memcpy(out.data() + b.front() * width, e.data(), e.size() * sizeof(float));
  }
  return out;
}

std::vector<float> encode_visual_all(const ImageEncoder& enc, std::size_t width, const std::vector<FrameRef>& refs,
                                     std::size_t batch) {
  std::vector<const data::ImageTensor*> uniq;
  std::map<const data::ImageTensor*, std::size_t> slot;
  std::vector<std::size_t> frame_slot(refs.size());
  std::vector<FrameRef> uniq_refs;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto* img = &refs[i].image();
    auto [it, inserted] = slot.emplace(img, uniq.size());
    if (inserted) {
      uniq.push_back(img);
      uniq_refs.push_back(refs[i]);
    }
    frame_slot[i] = it->second;
  }
  std::vector<float> enc_rows(uniq.size() * width);
  for (const auto& b : sequential_batches(uniq.size(), batch)) {
    const auto e = enc(gather_images(uniq_refs, b));
    if (e.size() != b.size() * width) throw InvalidState("visual encoder returned an unexpected width");
    std::memcpy(enc_rows.data() + b.front() * width, e.data(), e.size() * sizeof(float));
  }
  std::vector<float> out(refs.size() * width);
  for (std::size_t i = 0; i < refs.size(); ++i)
    std::memcpy(out.data() + i * width, enc_rows.data() + frame_slot[i] * width, width * sizeof(float));
  return out;
}

std::vector<double> softmax_row(const float* logits, std::size_t k) {
  std::vector<double> p(k);
  double mx = -INFINITY;
  for (std::size_t j = 0; j < k; ++j) {
    if (!std::isfinite(logits[j])) throw NumericalError("non-finite logit");
    mx = std::max(mx, static_cast<double>(logits[j]));
  }
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += (p[j] = std::exp(static_cast<double>(logits[j]) - mx));
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace avjoint::train::detail
