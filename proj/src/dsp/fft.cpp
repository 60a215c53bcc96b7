// SPDX-License-Identifier: Apache-2.0
#include "fft.hpp"

#include <cmath>
#include <numbers>

namespace avjoint::dsp::detail {
namespace {

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

void radix2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    // Twiddles computed directly (not by repeated multiplication) to keep
    // round-off at the 1e-15 level for long windows.
    std::vector<cplx> tw(half);
    for (std::size_t k = 0; k < half; ++k)
      tw[k] = cplx(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * tw[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

void bluestein(std::vector<cplx>& a) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small.
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), -std::sin(ang));
  }
  std::vector<cplx> u(m), v(m);
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  v[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) v[k] = v[m - k] = std::conj(chirp[k]);
  radix2(u, false);
  radix2(v, false);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  radix2(u, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * chirp[k];
}

}  // namespace

void fft(std::vector<cplx>& a) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size()))
    radix2(a, false);
  else
    bluestein(a);
}

RealFft::RealFft(std::size_t n) : n_(n), buf_(n) {}

void RealFft::magnitude(std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < n_; ++i) buf_[i] = cplx(x[i], 0.0);
  fft(buf_);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::abs(buf_[k]);
}

}  // namespace avjoint::dsp::detail
