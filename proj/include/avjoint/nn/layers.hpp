// SPDX-License-Identifier: Apache-2.0
//
// Forward/backward kernels for the fixed layer set used by the encoders and
// the classifier. Each layer caches what its backward pass needs from the
// most recent forward call; backward without a prior forward throws
// InvalidState. Parameter gradients accumulate (+=) and are skipped for
// frozen entries.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "avjoint/nn/params.hpp"
#include "avjoint/nn/tensor.hpp"
#include "avjoint/rng.hpp"

namespace avjoint::nn {

enum class Mode { Train, Eval };

/// floor((len + 2 pad - k) / stride) + 1; throws InvalidInput when the
/// padded input is shorter than the kernel.
std::size_t conv_out_len(std::size_t len, std::size_t k, std::size_t pad, std::size_t stride);

/// Kaiming-uniform bound for ReLU networks: sqrt(6 / fan_in).
double kaiming_bound(std::size_t fan_in) noexcept;

/// y = x W^T + b with x: N x F, W: O x F.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, ParamGroup group);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  Param<T>& weight() { return *w_; }
  Param<T>& bias() { return *b_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Param<T>* w_ = nullptr;
  Param<T>* b_ = nullptr;
  Tensor<T> x_;
  bool cached_ = false;
};

struct Conv2dShape {
  std::size_t in_channels = 1, out_channels = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

/// Cross-correlation over N x C x H x W via im2col + GEMM.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, Conv2dShape shape, ParamGroup group);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  const Conv2dShape& shape() const noexcept { return s_; }
  Param<T>& weight() { return *w_; }
  Param<T>& bias() { return *b_; }

 private:
  Conv2dShape s_;
  Param<T>* w_ = nullptr;  // Cout x Cin x kh x kw
  Param<T>* b_ = nullptr;
  std::vector<T> cols_;
  std::vector<std::size_t> in_dims_;
  bool cached_ = false;
};

/// Cross-correlation over N x C x L; shares the im2col kernel of Conv2d
/// with H = 1.
template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore<T>& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
         std::size_t kernel, std::size_t pad, std::size_t stride, ParamGroup group);

  void init(Rng& rng) { conv_.init(rng); }
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  std::size_t out_len(std::size_t len) const;
  Param<T>& weight() { return conv_.weight(); }
  Param<T>& bias() { return conv_.bias(); }

 private:
  Conv2d<T> conv_;
};

/// Zero-padded average pooling; the divisor is always the kernel size.
template <typename T>
class AvgPool1d {
 public:
  explicit AvgPool1d(std::size_t kernel = 3, std::size_t pad = 1, std::size_t stride = 2)
      : k_(kernel), pad_(pad), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  std::size_t out_len(std::size_t len) const { return conv_out_len(len, k_, pad_, stride_); }

 private:
  std::size_t k_, pad_, stride_;
  std::vector<std::size_t> in_dims_;
};

/// N x C x H x W -> N x C.
template <typename T>
class GlobalAvgPool2d {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::vector<std::size_t> in_dims_;
};

/// Per-channel normalization over N and any trailing spatial dims.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore<T>& store, const std::string& name, std::size_t channels, ParamGroup group,
            double momentum = 0.1, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);

  Param<T>& gamma() { return *gamma_; }
  Param<T>& beta() { return *beta_; }
  Param<T>& running_mean() { return *mean_; }
  Param<T>& running_var() { return *var_; }
  double eps() const noexcept { return eps_; }

 private:
  std::size_t channels_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  Param<T>* gamma_ = nullptr;
  Param<T>* beta_ = nullptr;
  Param<T>* mean_ = nullptr;
  Param<T>* var_ = nullptr;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::Eval;
  bool cached_ = false;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::vector<bool> mask_;
  bool cached_ = false;
};

/// Inverted dropout: survivors are scaled by 1 / (1 - p). Identity in eval
/// mode or when p == 0.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double p = 0.5);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng);
  Tensor<T> backward(const Tensor<T>& dy);
  double p() const noexcept { return p_; }

 private:
  double p_;
  std::vector<T> scale_;
  bool identity_ = true;
  bool cached_ = false;
};

template <typename T>
struct CrossEntropyResult {
  T loss = T(0);     // mean over the batch of -ln p[label]
  Tensor<T> probs;   // N x K, rows sum to 1
};

/// Numerically stable softmax + mean negative log-likelihood.
template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

/// d(mean loss)/d(logits) = (probs - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, const std::vector<int>& labels);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// [a | b] along dim 1 for rank-2 inputs with equal N.
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);

/// Splits dim 1 of a rank-2 tensor at `at`.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_cols(const Tensor<T>& x, std::size_t at);

}  // namespace avjoint::nn
