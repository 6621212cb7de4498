#include "ultr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ultr/errors.hpp"

namespace ultr::nn {

GradCheckReport gradcheck(const std::function<double()>& loss_value,
                          const std::function<void()>& backward_pass,
                          const std::vector<ParamRef>& params, double h,
                          std::size_t min_coords, Rng& rng) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.size;
  GradCheckReport report;
  if (total == 0) return report;

  backward_pass();
  // Snapshot analytic gradients before the numeric probes overwrite state.
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.emplace_back(p.grad, p.grad + p.size);
  }

  // Global coordinate indices to probe.
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), 0);
  if (total > min_coords) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(min_coords);
  }

  for (std::size_t global : coords) {
    std::size_t tensor = 0;
    std::size_t offset = global;
    while (offset >= params[tensor].size) {
      offset -= params[tensor].size;
      ++tensor;
    }
    double* slot = params[tensor].data + offset;
    const double keep = *slot;

    *slot = keep + h;
    const double lp = loss_value();
    *slot = keep - h;
    const double lm = loss_value();
    *slot = keep;

    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      throw NumericError("gradcheck: non-finite loss during probe");
    }
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = analytic[tensor][offset];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = params[tensor].name;
      report.worst_index = offset;
    }
    ++report.coords_checked;
  }
  return report;
}

}  // namespace ultr::nn
