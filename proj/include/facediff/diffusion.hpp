#pragma once

#include <cstdint>
#include <vector>

#include "facediff/common.hpp"

namespace facediff {

enum class ScheduleKind : uint32_t { Cosine = 0, Linear = 1 };

// Variance schedule. alphas[t-1] is the per-step retention at step t;
// alpha_bars[t] is the cumulative product with alpha_bars[0] = 1.
struct DiffusionSchedule {
  ScheduleKind kind = ScheduleKind::Cosine;
  int T = 0;
  std::vector<double> alphas;      // size T
  std::vector<double> alpha_bars;  // size T+1, strictly decreasing, alpha_bars[T] > 0

  double alpha_bar(int t) const { return alpha_bars[static_cast<size_t>(t)]; }
  void validate() const;
};

DiffusionSchedule make_schedule(ScheduleKind kind, int T);

// Flat noised array plus the step it sits at.
struct NoisedState {
  std::vector<double> values;
  int step = 0;
};

// Closed-form forward noising: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
NoisedState q_sample(const std::vector<double>& x0, int t, const std::vector<double>& noise,
                     const DiffusionSchedule& schedule);

// One reverse step from the predicted clean sample:
// sqrt(abar_{t-1}) xhat0 + sqrt(1 - abar_{t-1}) noise. At t = 1 the variance
// is zero and the result is exactly xhat0.
NoisedState ddpm_step(const std::vector<double>& x_hat0, int t, const std::vector<double>& noise,
                      const DiffusionSchedule& schedule);

}  // namespace facediff
