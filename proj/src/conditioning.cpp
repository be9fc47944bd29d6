#include "facediff/conditioning.hpp"

#include <cmath>

namespace facediff {

void AudioFeatureSequence::validate() const {
  require(n_frames >= 1, "AudioFeatureSequence: empty audio");
  require(feature_dim >= 1 && feature_rate >= 1, "AudioFeatureSequence: bad dims");
  require(features.size() == static_cast<size_t>(n_frames) * feature_dim,
          "AudioFeatureSequence: buffer size mismatch");
  require(all_finite(features), "AudioFeatureSequence: non-finite feature");
}

void MaskPlan::validate() const {
  require(mask_prob >= 0.0 && mask_prob <= 1.0, "MaskPlan: mask_prob out of [0,1]");
}

Mat resample_audio(const AudioFeatureSequence& audio, int n_frames, int fps) {
  audio.validate();
  require(n_frames >= 1, "resample_audio: n_frames must be positive");
  require(fps >= 1, "resample_audio: fps must be positive");
  Mat out(n_frames, audio.feature_dim);
  for (int i = 0; i < n_frames; ++i) {
    // mesh frame i at time i/fps, mapped into audio sample positions
    const double pos = static_cast<double>(i) * audio.feature_rate / fps;
    double* r = out.row(i);
    if (pos <= 0.0) {
      std::copy(audio.frame(0), audio.frame(0) + audio.feature_dim, r);
      continue;
    }
    if (pos >= audio.n_frames - 1) {
      const double* last = audio.frame(audio.n_frames - 1);
      std::copy(last, last + audio.feature_dim, r);
      continue;
    }
    const int lo = static_cast<int>(std::floor(pos));
    const double w = pos - lo;
    const double* a = audio.frame(lo);
    const double* b = audio.frame(lo + 1);
    for (int j = 0; j < audio.feature_dim; ++j) r[j] = (1.0 - w) * a[j] + w * b[j];
  }
  return out;
}

Mat mask_audio(const Mat& audio_resampled, bool masked, const DenoiserParams& params) {
  if (!masked) return audio_resampled;
  require(static_cast<int>(params.null_audio.size()) == audio_resampled.cols,
          "mask_audio: null embedding dim mismatch");
  Mat out(audio_resampled.rows, audio_resampled.cols);
  for (int i = 0; i < out.rows; ++i) {
    std::copy(params.null_audio.a.begin(), params.null_audio.a.end(), out.row(i));
  }
  return out;
}

bool draw_mask(const MaskPlan& plan, Prng& rng) {
  plan.validate();
  return rng.bernoulli(plan.mask_prob);
}

Mat guided_predict(int t, const Mat& audio, const Mat& x_t, double s,
                   const DenoiserConfig& config, const DenoiserParams& params) {
  const Mat masked = mask_audio(audio, true, params);
  const Mat g_masked = denoiser_forward(t, masked, x_t, config, params);
  const Mat g_cond = denoiser_forward(t, audio, x_t, config, params);
  Mat out(g_masked.rows, g_masked.cols);
  for (size_t i = 0; i < out.a.size(); ++i) {
    out.a[i] = g_masked.a[i] + s * (g_cond.a[i] - g_masked.a[i]);
  }
  return out;
}

}  // namespace facediff
