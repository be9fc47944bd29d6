#include "facediff/diffusion.hpp"

#include <cmath>

namespace facediff {

void DiffusionSchedule::validate() const {
  require(T >= 1, "DiffusionSchedule: T must be >= 1");
  require(static_cast<int>(alphas.size()) == T, "DiffusionSchedule: alphas size");
  require(static_cast<int>(alpha_bars.size()) == T + 1, "DiffusionSchedule: alpha_bars size");
  require(alpha_bars[0] == 1.0, "DiffusionSchedule: alpha_bars[0] must be 1");
  require(alpha_bars[T] > 0.0, "DiffusionSchedule: alpha_bars[T] must stay positive");
  for (int t = 1; t <= T; ++t) {
    require(alphas[t - 1] > 0.0 && alphas[t - 1] < 1.0, "DiffusionSchedule: alpha out of (0,1)");
    require(alpha_bars[t] < alpha_bars[t - 1], "DiffusionSchedule: alpha_bars must decrease");
    const double expect = alpha_bars[t - 1] * alphas[t - 1];
    require(std::abs(alpha_bars[t] - expect) <= 1e-12 * expect,
            "DiffusionSchedule: cumulative product inconsistent");
  }
}

DiffusionSchedule make_schedule(ScheduleKind kind, int T) {
  require(T >= 1, "make_schedule: T must be >= 1");
  DiffusionSchedule s;
  s.kind = kind;
  s.T = T;
  s.alphas.resize(T);
  if (kind == ScheduleKind::Linear) {
    // beta linearly interpolated from 1e-4 to 2e-2 over steps 1..T.
    for (int t = 1; t <= T; ++t) {
      const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / (T - 1);
      const double beta = 1e-4 + frac * (2e-2 - 1e-4);
      s.alphas[t - 1] = 1.0 - beta;
    }
  } else {
    // Squared-cosine abar curve; per-step alpha clipped below at 0.001 so the
    // cumulative product never collapses to zero.
    const double offset = 0.008;
    auto abar = [&](double t) {
      const double u = (t / T + offset) / (1.0 + offset) * (std::numbers::pi / 2.0);
      const double c = std::cos(u);
      return c * c;
    };
    const double abar0 = abar(0.0);
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      const double cur = abar(static_cast<double>(t)) / abar0;
      // clip per-step alpha below by 0.001; the upper guard only keeps the
      // ratio strictly inside (0,1) against rounding
      double alpha = cur / prev;
      alpha = std::min(std::max(alpha, 0.001), 1.0 - 1e-12);
      s.alphas[t - 1] = alpha;
      prev *= alpha;
    }
  }
  s.alpha_bars.resize(T + 1);
  s.alpha_bars[0] = 1.0;
  for (int t = 1; t <= T; ++t) s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t - 1];
  s.validate();
  return s;
}

NoisedState q_sample(const std::vector<double>& x0, int t, const std::vector<double>& noise,
                     const DiffusionSchedule& schedule) {
  require(t >= 1 && t <= schedule.T, "q_sample: t out of range");
  require(x0.size() == noise.size(), "q_sample: shape mismatch");
  const double abar = schedule.alpha_bar(t);
  const double c0 = std::sqrt(abar);
  const double cn = std::sqrt(1.0 - abar);
  NoisedState out;
  out.step = t;
  out.values.resize(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) out.values[i] = c0 * x0[i] + cn * noise[i];
  return out;
}

NoisedState ddpm_step(const std::vector<double>& x_hat0, int t, const std::vector<double>& noise,
                      const DiffusionSchedule& schedule) {
  require(t >= 1 && t <= schedule.T, "ddpm_step: t out of range");
  require(x_hat0.size() == noise.size(), "ddpm_step: shape mismatch");
  NoisedState out;
  out.step = t - 1;
  if (t == 1) {
    // abar_0 = 1: zero variance, the chain ends on xhat0 exactly.
    out.values = x_hat0;
    return out;
  }
  const double abar = schedule.alpha_bar(t - 1);
  const double c0 = std::sqrt(abar);
  const double cn = std::sqrt(1.0 - abar);
  out.values.resize(x_hat0.size());
  for (size_t i = 0; i < x_hat0.size(); ++i) out.values[i] = c0 * x_hat0[i] + cn * noise[i];
  return out;
}

}  // namespace facediff
