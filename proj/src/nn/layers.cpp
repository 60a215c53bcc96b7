// SPDX-License-Identifier: Apache-2.0
#include "avjoint/nn/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace avjoint::nn {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatR<T>>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;

void require_cache(bool cached, const char* layer) {
  if (!cached) throw InvalidState(std::string(layer) + ": backward called without a forward cache");
}

template <typename T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace

std::size_t conv_out_len(std::size_t len, std::size_t k, std::size_t pad, std::size_t stride) {
  if (stride == 0) throw InvalidInput("stride must be >= 1");
  if (len + 2 * pad < k)
    throw InvalidInput("input length " + std::to_string(len) + " (+2*" + std::to_string(pad) +
                       " padding) is shorter than kernel " + std::to_string(k));
  return (len + 2 * pad - k) / stride + 1;
}

double kaiming_bound(std::size_t fan_in) noexcept { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

const char* to_string(ParamGroup g) noexcept {
  switch (g) {
    case ParamGroup::AE: return "AE";
    case ParamGroup::VE: return "VE";
    case ParamGroup::SC: return "SC";
  }
  return "?";
}

// --- Linear ------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                  ParamGroup group)
    : in_(in), out_(out) {
  w_ = &store.add(name + ".weight", {out, in}, group);
  b_ = &store.add(name + ".bias", {out}, group);
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  init_uniform(w_->value, kaiming_bound(in_), rng);
  b_->value.fill(T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw InvalidInput("linear: expected N x " + std::to_string(in_) + " input, got " + x.shape_string());
  const std::size_t n = x.dim(0);
  Tensor<T> y({n, out_});
  Map<T> ym(y.data(), n, out_);
  ym.noalias() = CMap<T>(x.data(), n, in_) * CMap<T>(w_->value.data(), out_, in_).transpose();
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b_->value.data(), out_);
  x_ = x;
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  require_cache(cached_, "linear");
  const std::size_t n = x_.dim(0);
  if (dy.rank() != 2 || dy.dim(0) != n || dy.dim(1) != out_) throw InvalidInput("linear: bad upstream gradient shape");
  CMap<T> dym(dy.data(), n, out_);
  CMap<T> xm(x_.data(), n, in_);
  if (!w_->frozen) Map<T>(w_->grad.data(), out_, in_).noalias() += dym.transpose() * xm;
  if (!b_->frozen) {
    // fixed summation order; Eigen reductions depend on pointer alignment
    T* bg = b_->grad.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) bg[j] += dy.data()[i * out_ + j];
  }
  Tensor<T> dx({n, in_});
  Map<T>(dx.data(), n, in_).noalias() = dym * CMap<T>(w_->value.data(), out_, in_);
  return dx;
}

// --- Conv2d ------------------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t n, cin, h, w, ho, wo, kh, kw, sh, sw, ph, pw;
  std::size_t col_rows() const { return cin * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
};

// Columns of sample n occupy [n * P, (n + 1) * P) of every row; rows have stride `ld`.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols, std::size_t ld) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * ld;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.sh + i) - static_cast<long>(g.ph);
          T* out = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* xr = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.sw + j) - static_cast<long>(g.pw);
            out[ox] = ix >= 0 && ix < static_cast<long>(g.w) ? xr[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx, std::size_t ld) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * ld;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.sh + i) - static_cast<long>(g.ph);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dxr = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* in = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.sw + j) - static_cast<long>(g.pw);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dxr[ix] += in[ox];
          }
        }
      }
}

ConvGeom make_geom(const std::vector<std::size_t>& d, const Conv2dShape& s) {
  if (d.size() != 4 || d[1] != s.in_channels)
    throw InvalidInput("conv: expected N x " + std::to_string(s.in_channels) + " x H x W input");
  ConvGeom g{};
  g.n = d[0];
  g.cin = d[1];
  g.h = d[2];
  g.w = d[3];
  g.kh = s.kernel_h;
  g.kw = s.kernel_w;
  g.sh = s.stride_h;
  g.sw = s.stride_w;
  g.ph = s.pad_h;
  g.pw = s.pad_w;
  g.ho = conv_out_len(g.h, g.kh, g.ph, g.sh);
  g.wo = conv_out_len(g.w, g.kw, g.pw, g.sw);
  return g;
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, Conv2dShape shape, ParamGroup group)
    : s_(shape) {
  if (s_.kernel_h == 0 || s_.kernel_w == 0 || s_.stride_h == 0 || s_.stride_w == 0)
    throw InvalidConfig("conv: kernel and stride must be >= 1");
  w_ = &store.add(name + ".weight", {s_.out_channels, s_.in_channels, s_.kernel_h, s_.kernel_w}, group);
  b_ = &store.add(name + ".bias", {s_.out_channels}, group);
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  init_uniform(w_->value, kaiming_bound(s_.in_channels * s_.kernel_h * s_.kernel_w), rng);
  b_->value.fill(T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  const ConvGeom g = make_geom(x.dims(), s_);
  const std::size_t cout = s_.out_channels, p = g.col_cols(), ld = g.n * p;
  cols_.resize(g.col_rows() * ld);
  for (std::size_t n = 0; n < g.n; ++n) im2col(x.data() + n * g.cin * g.h * g.w, g, cols_.data() + n * p, ld);
  MatR<T> out(cout, ld);
  out.noalias() = CMap<T>(w_->value.data(), cout, g.col_rows()) * CMap<T>(cols_.data(), g.col_rows(), ld);
  Tensor<T> y({g.n, cout, g.ho, g.wo});
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t c = 0; c < cout; ++c) {
      const T b = b_->value[c];
      const T* src = out.data() + c * ld + n * p;
      T* dst = y.data() + (n * cout + c) * p;
      for (std::size_t k = 0; k < p; ++k) dst[k] = src[k] + b;
    }
  in_dims_ = x.dims();
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  require_cache(cached_, "conv");
  const ConvGeom g = make_geom(in_dims_, s_);
  const std::size_t cout = s_.out_channels, p = g.col_cols(), ld = g.n * p;
  if (dy.dims() != std::vector<std::size_t>{g.n, cout, g.ho, g.wo}) throw InvalidInput("conv: bad upstream gradient shape");
  MatR<T> d(cout, ld);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t c = 0; c < cout; ++c)
      std::copy_n(dy.data() + (n * cout + c) * p, p, d.data() + c * ld + n * p);
  if (!w_->frozen)
    Map<T>(w_->grad.data(), cout, g.col_rows()).noalias() += d * CMap<T>(cols_.data(), g.col_rows(), ld).transpose();
  if (!b_->frozen)
    for (std::size_t c = 0; c < cout; ++c) {
      T acc = 0;
      for (std::size_t k = 0; k < ld; ++k) acc += d(c, k);
      b_->grad.data()[c] += acc;
    }
  MatR<T> dcols(g.col_rows(), ld);
  dcols.noalias() = CMap<T>(w_->value.data(), cout, g.col_rows()).transpose() * d;
  Tensor<T> dx(in_dims_);
  for (std::size_t n = 0; n < g.n; ++n) col2im(dcols.data() + n * p, g, dx.data() + n * g.cin * g.h * g.w, ld);
  return dx;
}

// --- Conv1d ------------------------------------------------------------------

template <typename T>
Conv1d<T>::Conv1d(ParamStore<T>& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                  std::size_t kernel, std::size_t pad, std::size_t stride, ParamGroup group)
    : conv_(store, name, Conv2dShape{in_ch, out_ch, 1, kernel, 1, stride, 0, pad}, group) {}

template <typename T>
std::size_t Conv1d<T>::out_len(std::size_t len) const {
  const auto& s = conv_.shape();
  return conv_out_len(len, s.kernel_w, s.pad_w, s.stride_w);
}

template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 3) throw InvalidInput("conv1d: expected N x C x L input, got " + x.shape_string());
  Tensor<T> x4 = x;
  x4.reshape({x.dim(0), x.dim(1), 1, x.dim(2)});
  Tensor<T> y = conv_.forward(x4);
  y.reshape({y.dim(0), y.dim(1), y.dim(3)});
  return y;
}

template <typename T>
Tensor<T> Conv1d<T>::backward(const Tensor<T>& dy) {
  if (dy.rank() != 3) throw InvalidInput("conv1d: expected rank-3 upstream gradient");
  Tensor<T> d4 = dy;
  d4.reshape({dy.dim(0), dy.dim(1), 1, dy.dim(2)});
  Tensor<T> dx = conv_.backward(d4);
  dx.reshape({dx.dim(0), dx.dim(1), dx.dim(3)});
  return dx;
}

// --- pooling -----------------------------------------------------------------

template <typename T>
Tensor<T> AvgPool1d<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 3) throw InvalidInput("avgpool1d: expected N x C x L input");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const std::size_t lo = out_len(len);
  Tensor<T> y({x.dim(0), x.dim(1), lo});
  const T inv_k = T(1) / static_cast<T>(k_);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * len;
    T* yr = y.data() + r * lo;
    for (std::size_t o = 0; o < lo; ++o) {
      T acc = 0;
      for (std::size_t j = 0; j < k_; ++j) {
        const long i = static_cast<long>(o * stride_ + j) - static_cast<long>(pad_);
        if (i >= 0 && i < static_cast<long>(len)) acc += xr[i];
      }
      yr[o] = acc * inv_k;
    }
  }
  in_dims_ = x.dims();
  return y;
}

template <typename T>
Tensor<T> AvgPool1d<T>::backward(const Tensor<T>& dy) {
  require_cache(!in_dims_.empty(), "avgpool1d");
  const std::size_t rows = in_dims_[0] * in_dims_[1], len = in_dims_[2];
  const std::size_t lo = out_len(len);
  if (dy.size() != rows * lo) throw InvalidInput("avgpool1d: bad upstream gradient shape");
  Tensor<T> dx(in_dims_);
  const T inv_k = T(1) / static_cast<T>(k_);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dyr = dy.data() + r * lo;
    T* dxr = dx.data() + r * len;
    for (std::size_t o = 0; o < lo; ++o)
      for (std::size_t j = 0; j < k_; ++j) {
        const long i = static_cast<long>(o * stride_ + j) - static_cast<long>(pad_);
        if (i >= 0 && i < static_cast<long>(len)) dxr[i] += dyr[o] * inv_k;
      }
  }
  return dx;
}

template <typename T>
Tensor<T> GlobalAvgPool2d<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw InvalidInput("global_avgpool: expected N x C x H x W input");
  const std::size_t rows = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += x[r * area + i];
    y[r] = acc / static_cast<T>(area);
  }
  in_dims_ = x.dims();
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool2d<T>::backward(const Tensor<T>& dy) {
  require_cache(!in_dims_.empty(), "global_avgpool");
  const std::size_t rows = in_dims_[0] * in_dims_[1], area = in_dims_[2] * in_dims_[3];
  if (dy.size() != rows) throw InvalidInput("global_avgpool: bad upstream gradient shape");
  Tensor<T> dx(in_dims_);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < area; ++i) dx[r * area + i] = dy[r] / static_cast<T>(area);
  return dx;
}

// --- BatchNorm ---------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(ParamStore<T>& store, const std::string& name, std::size_t channels, ParamGroup group,
                        double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  if (!(eps > 0.0)) throw InvalidConfig("batchnorm: epsilon must be positive");
  gamma_ = &store.add(name + ".gamma", {channels}, group);
  beta_ = &store.add(name + ".beta", {channels}, group);
  mean_ = &store.add(name + ".running_mean", {channels}, group, /*buffer=*/true);
  var_ = &store.add(name + ".running_var", {channels}, group, /*buffer=*/true);
  gamma_->value.fill(T(1));
  var_->value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != channels_)
    throw InvalidInput("batchnorm: expected N x " + std::to_string(channels_) + " x ... input, got " + x.shape_string());
  const std::size_t n = x.dim(0), c = channels_, s = x.size() / (n * c);
  const std::size_t m = n * s;
  if (mode == Mode::Train && n < 2) throw InvalidInput("batchnorm: training mode needs a batch of at least 2");

  Tensor<T> y(x.dims());
  xhat_ = Tensor<T>(x.dims());
  inv_std_.assign(c, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::Train) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) acc += x[(i * c + ch) * s + j];
      mean = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          const double d = x[(i * c + ch) * s + j] - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(m);
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      mean_->value[ch] = static_cast<T>((1.0 - momentum_) * mean_->value[ch] + momentum_ * mean);
      var_->value[ch] = static_cast<T>((1.0 - momentum_) * var_->value[ch] + momentum_ * unbiased);
    } else {
      mean = mean_->value[ch];
      var = var_->value[ch];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
    inv_std_[ch] = inv;
    const T g = gamma_->value[ch], b = beta_->value[ch], mu = static_cast<T>(mean);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t k = (i * c + ch) * s + j;
        xhat_[k] = (x[k] - mu) * inv;
        y[k] = g * xhat_[k] + b;
      }
  }
  mode_ = mode;
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy) {
  require_cache(cached_, "batchnorm");
  if (!dy.same_shape(xhat_)) throw InvalidInput("batchnorm: bad upstream gradient shape");
  const std::size_t n = xhat_.dim(0), c = channels_, s = xhat_.size() / (n * c);
  const T m = static_cast<T>(n * s);
  Tensor<T> dx(xhat_.dims());
  for (std::size_t ch = 0; ch < c; ++ch) {
    T dbeta = 0, dgamma = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t k = (i * c + ch) * s + j;
        dbeta += dy[k];
        dgamma += dy[k] * xhat_[k];
      }
    if (!gamma_->frozen) gamma_->grad[ch] += dgamma;
    if (!beta_->frozen) beta_->grad[ch] += dbeta;
    const T g = gamma_->value[ch], inv = inv_std_[ch];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t k = (i * c + ch) * s + j;
        dx[k] = mode_ == Mode::Train ? g * inv / m * (m * dy[k] - dbeta - xhat_[k] * dgamma) : g * inv * dy[k];
      }
  }
  return dx;
}

// --- ReLU / Dropout ------------------------------------------------------------

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = x[i] > T(0);
    y[i] = mask_[i] ? x[i] : T(0);
  }
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
  require_cache(cached_, "relu");
  if (dy.size() != mask_.size()) throw InvalidInput("relu: bad upstream gradient shape");
  Tensor<T> dx(dy.dims());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = mask_[i] ? dy[i] : T(0);
  return dx;
}

template <typename T>
Dropout<T>::Dropout(double p) : p_(p) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidConfig("dropout: p must lie in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
  cached_ = true;
  identity_ = mode == Mode::Eval || p_ == 0.0;
  if (identity_) return x;
  std::bernoulli_distribution keep(1.0 - p_);
  const T scale = static_cast<T>(1.0 / (1.0 - p_));
  scale_.resize(x.size());
  Tensor<T> y(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale_[i] = keep(rng) ? scale : T(0);
    y[i] = x[i] * scale_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  require_cache(cached_, "dropout");
  if (identity_) return dy;
  if (dy.size() != scale_.size()) throw InvalidInput("dropout: bad upstream gradient shape");
  Tensor<T> dx(dy.dims());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * scale_[i];
  return dx;
}

// --- softmax / cross-entropy ---------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw InvalidInput("softmax: expected N x K logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.dims());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data() + i * k;
    T mx = z[0];
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(static_cast<double>(z[j]))) throw NumericalError("softmax: non-finite logit");
      mx = std::max(mx, z[j]);
    }
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += (p[i * k + j] = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= sum;
  }
  return p;
}

template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw InvalidInput("cross_entropy: logits/labels batch mismatch");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  CrossEntropyResult<T> r;
  r.probs = softmax(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw InvalidInput("cross_entropy: label out of range");
    // log-softmax directly, so saturated rows give ~0 rather than -log(1 - tiny).
    const T* z = logits.data() + i * k;
    const T mx = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    total += std::log(sum) - static_cast<double>(z[labels[i]] - mx);
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, const std::vector<int>& labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> d = probs;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i * k + static_cast<std::size_t>(labels[i])] -= T(1);
    for (std::size_t j = 0; j < k; ++j) d[i * k + j] *= inv_n;
  }
  return d;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw InvalidInput("concat: inputs must be rank-2 with equal batch size");
  const std::size_t n = a.dim(0), wa = a.dim(1), wb = b.dim(1);
  Tensor<T> out({n, wa + wb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * wa, wa, out.data() + i * (wa + wb));
    std::copy_n(b.data() + i * wb, wb, out.data() + i * (wa + wb) + wa);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_cols(const Tensor<T>& x, std::size_t at) {
  if (x.rank() != 2 || at > x.dim(1)) throw InvalidInput("split_cols: bad split point");
  const std::size_t n = x.dim(0), w = x.dim(1);
  Tensor<T> a({n, at}), b({n, w - at});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data() + i * w, at, a.data() + i * at);
    std::copy_n(x.data() + i * w + at, w - at, b.data() + i * (w - at));
  }
  return {std::move(a), std::move(b)};
}

#define AVJOINT_INSTANTIATE(T)                                                                  \
  template class Linear<T>;                                                                     \
  template class Conv2d<T>;                                                                     \
  template class Conv1d<T>;                                                                     \
  template class AvgPool1d<T>;                                                                  \
  template class GlobalAvgPool2d<T>;                                                            \
  template class BatchNorm<T>;                                                                  \
  template class ReLU<T>;                                                                       \
  template class Dropout<T>;                                                                    \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                              \
  template CrossEntropyResult<T> softmax_cross_entropy<T>(const Tensor<T>&, const std::vector<int>&); \
  template Tensor<T> softmax_cross_entropy_backward<T>(const Tensor<T>&, const std::vector<int>&);    \
  template Tensor<T> concat_cols<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template std::pair<Tensor<T>, Tensor<T>> split_cols<T>(const Tensor<T>&, std::size_t);

AVJOINT_INSTANTIATE(float)
AVJOINT_INSTANTIATE(double)
#undef AVJOINT_INSTANTIATE

}  // namespace avjoint::nn
