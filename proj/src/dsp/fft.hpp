// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <span>
#include <vector>

namespace avjoint::dsp::detail {

using cplx = std::complex<double>;

/// In-place forward DFT. Radix-2 for power-of-two sizes, Bluestein otherwise.
void fft(std::vector<cplx>& a);

/// Plan for repeated real transforms of one length; reuses twiddles.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  /// Magnitudes of bins 0..n/2 of the DFT of `x` (length n).
  void magnitude(std::span<const double> x, std::span<double> out);

 private:
  std::size_t n_;
  std::vector<cplx> buf_;
};

}  // namespace avjoint::dsp::detail
