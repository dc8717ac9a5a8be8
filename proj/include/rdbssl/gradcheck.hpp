#pragma once

#include "rdbssl/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace rdbssl::ad {

// Builds the loss on a fresh tape from the current parameter values. Must be
// deterministic: any sampling inside has to use fixed seeds.
using LossFn = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckOptions {
  int probe_count = 32;
  double step_size = 1e-5;
  // Gradients smaller than this are compared absolutely: central-difference
  // roundoff at h = 1e-5 is about 1e-11 * |loss|, so relative error on
  // near-zero gradients measures noise rather than the gradient.
  double absolute_floor = 1e-6;
  std::uint64_t seed = 0;
  // Optional: substitute for the analytic gradient (used to validate the checker).
  std::function<void(ParamStore&)> corrupt_gradients;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  int probes = 0;
  std::string worst_parameter;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients against central differences on randomly
// chosen coordinates:
//   err = |analytic - numeric| / max(|analytic|, |numeric|, absolute_floor).
// Parameter values are restored afterwards; gradients are left zeroed.
GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamStore& params,
                                  const GradCheckOptions& options = {});

}  // namespace rdbssl::ad
