#pragma once

#include <optional>

#include "facediff/conditioning.hpp"
#include "facediff/training.hpp"
#include "facediff/types.hpp"

namespace facediff {

// Components pinned during sampling. Every provided reference is exact
// (bitwise) in the final output.
struct ReferenceSet {
  std::optional<IdentityRepr> identity;
  std::optional<PoseRepr> pose;
  std::optional<MotionRepr> motion;
};

// Full reverse chain: start from unit Gaussian noise, predict the clean
// representation with masked-conditioning guidance at scale s, overwrite
// referenced slices of the prediction, step back with ddpm_step, and keep
// referenced slices pinned to their forward-noised values at every step.
// Guidance with s != 1 requires a model trained with masked conditioning
// (trained_mask_prob > 0).
FaceRepresentation sample(const Mat& audio, const ReferenceSet& refs, double s,
                          const DenoiserConfig& config, const DenoiserParams& params,
                          const DiffusionSchedule& schedule, const ReprScaler& scaler,
                          uint64_t seed, double trained_mask_prob);

// Elementwise sample() over seeds; chains are independent and run in parallel.
std::vector<FaceRepresentation> sample_batch(const Mat& audio, const ReferenceSet& refs, double s,
                                             const DenoiserConfig& config,
                                             const DenoiserParams& params,
                                             const DiffusionSchedule& schedule,
                                             const ReprScaler& scaler,
                                             const std::vector<uint64_t>& seeds,
                                             double trained_mask_prob);

}  // namespace facediff
