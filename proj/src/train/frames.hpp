// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "avjoint/train.hpp"

namespace avjoint::train::detail {

struct FrameRef {
  const data::Clip* clip = nullptr;
  std::size_t frame = 0;

  const dsp::FeatureMatrix& features() const { return clip->frames[frame]; }
  const data::ImageTensor& image() const;
};

std::vector<FrameRef> frame_refs(const std::vector<data::Clip>& clips);
std::vector<int> labels_of(const std::vector<FrameRef>& refs, const std::vector<std::size_t>& idx);

Tensor<float> gather_audio(const std::vector<FrameRef>& refs, const std::vector<std::size_t>& idx);

using RngFor = std::function<Rng(std::size_t)>;
/// Stacks the paired images; when `aug` is given each image is augmented
/// with the stream rng_for(sample index).
Tensor<float> gather_images(const std::vector<FrameRef>& refs, const std::vector<std::size_t>& idx,
                            const data::AugmentConfig* aug = nullptr, const RngFor& rng_for = {});

Tensor<float> gather_rows(const std::vector<float>& table, std::size_t width, const std::vector<std::size_t>& idx);

/// Eval-mode AE embeddings of every frame, row-major.
std::vector<float> encode_audio_all(AVModel<float>& model, const std::vector<FrameRef>& refs, std::size_t batch);

using ImageEncoder = std::function<Tensor<float>(const Tensor<float>&)>;
/// Encodes each distinct image once and spreads the rows over the frames
/// that share it.
std::vector<float> encode_visual_all(const ImageEncoder& enc, std::size_t width, const std::vector<FrameRef>& refs,
                                     std::size_t batch);

/// Softmax of a float logit row, evaluated in double.
std::vector<double> softmax_row(const float* logits, std::size_t k);

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch);

}  // namespace avjoint::train::detail
