#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "prnu/neural.hpp"

namespace prnu::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // perturbation moved some unit across the rectifier kink
  std::size_t skipped_tiny = 0;
};

inline std::vector<bool> relu_masks(const neural::ComparatorModel& m, std::span<const Plane> inputs) {
  std::vector<bool> mask;
  for (const auto& in : inputs)
    for (const auto& z : neural::forward_trace(m, in).pre)
      for (double v : z.v) mask.push_back(v > 0.0);
  return mask;
}

/// Central differences of the mean batch loss against backward(), parameter by parameter.
inline GradCheck check_gradients(neural::ComparatorModel model, std::span<const Plane> inputs,
                                 std::span<const double> labels, double eps = 1e-4, double abs_floor = 1e-10) {
  const auto analytic = neural::backward(model, inputs, labels).values;
  const auto base_mask = relu_masks(model, inputs);
  GradCheck out;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const double saved = model.params[i];
    model.params[i] = saved + eps;
    const double up = neural::batch_loss(model, inputs, labels);
    const bool kink_up = relu_masks(model, inputs) != base_mask;
    model.params[i] = saved - eps;
    const double down = neural::batch_loss(model, inputs, labels);
    const bool kink_down = relu_masks(model, inputs) != base_mask;
    model.params[i] = saved;
    if (kink_up || kink_down) {
      ++out.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2 * eps);
    const double a = analytic[i];
    if (std::abs(a) < 1e-12 && std::abs(numeric) < 1e-12) {
      ++out.skipped_tiny;
      continue;
    }
    ++out.checked;
    const double diff = std::abs(a - numeric);
    if (diff <= abs_floor) continue;
    out.max_rel_error = std::max(out.max_rel_error, diff / std::max(std::abs(a), std::abs(numeric)));
  }
  return out;
}

}  // namespace prnu::testing
