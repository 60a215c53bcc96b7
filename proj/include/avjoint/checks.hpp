// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient checks over every layer kind and the composed
// acoustic encoder + fusion + classifier network, all in double precision.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avjoint/nn/params.hpp"
#include "avjoint/rng.hpp"

namespace avjoint::checks {

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric) noexcept;

/// Central-difference check of the trainable entries of `params` whose
/// gradients were filled by the caller. Samples up to `max_coords` entries
/// per tensor (all of them when the tensor is smaller). Returns the max
/// relative error.
double grad_check(const std::function<double()>& loss, nn::ParamStore<double>& params, double eps, Rng& rng,
                  std::size_t max_coords = 32);

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
  std::size_t max_coords = 24;
  /// Test fixture only: "conv" reads every conv weight gradient one element
  /// off, which must make the check fail.
  std::string sabotage;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool pass = true;
};

GradCheckReport run_grad_check(const GradCheckOptions& opts);

}  // namespace avjoint::checks
