#pragma once

#include "facediff/denoiser.hpp"
#include "facediff/rng.hpp"

namespace facediff {

// N_a frames x Z_a channels of speech features at feature_rate per second.
struct AudioFeatureSequence {
  int n_frames = 0;
  int feature_dim = 0;
  int feature_rate = 0;
  std::vector<double> features;  // n_frames * feature_dim

  const double* frame(int i) const {
    return features.data() + static_cast<size_t>(i) * feature_dim;
  }
  double* frame(int i) { return features.data() + static_cast<size_t>(i) * feature_dim; }
  void validate() const;
};

// Whole-sequence masked-conditioning plan.
struct MaskPlan {
  double mask_prob = 0.10;
  enum class Mode { WholeSequence } mode = Mode::WholeSequence;
  void validate() const;
};

// Linear interpolation onto mesh-frame timestamps (i / fps); endpoints clamp.
Mat resample_audio(const AudioFeatureSequence& audio, int n_frames, int fps);

// masked == true replaces every frame with the learned null-audio embedding.
Mat mask_audio(const Mat& audio_resampled, bool masked, const DenoiserParams& params);

// Per-sample masking decision under the plan (whole-sequence granularity).
bool draw_mask(const MaskPlan& plan, Prng& rng);

// Masked-conditioning guidance: G(t, m(a), x) + s * (G(t, a, x) - G(t, m(a), x)).
// Always exactly two denoiser evaluations.
Mat guided_predict(int t, const Mat& audio, const Mat& x_t, double s,
                   const DenoiserConfig& config, const DenoiserParams& params);

}  // namespace facediff
