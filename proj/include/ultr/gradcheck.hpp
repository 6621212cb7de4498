#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ultr/nn.hpp"
#include "ultr/rng.hpp"

namespace ultr::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  // Coordinate with the worst error, for diagnostics.
  const char* worst_param = "";
  std::size_t worst_index = 0;
};

// Central-difference gradient check.
//
// `backward_pass` must zero gradients, run a forward/backward pass over a
// fixed batch and leave analytic gradients in the ParamRef grad buffers.
// `loss_value` must evaluate the same loss without touching gradients.
// Both must be deterministic functions of the parameters (seeded data,
// frozen batch-norm statistics).
//
// Checks max(min_coords, ...) uniformly sampled coordinates across all
// tensors, or every coordinate when there are fewer than min_coords.
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport gradcheck(const std::function<double()>& loss_value,
                          const std::function<void()>& backward_pass,
                          const std::vector<ParamRef>& params, double h,
                          std::size_t min_coords, Rng& rng);

}  // namespace ultr::nn
