#include "facediff/sampler.hpp"

#include <cstring>

#include "facediff/rng.hpp"

namespace facediff {

namespace {

struct RefSlices {
  // normalized reference values in flattened layout
  std::optional<std::vector<double>> identity;  // 3V
  std::optional<Mat> pose;                      // N x 3
  std::optional<Mat> motion;                    // N x 3V
};

// Overwrite referenced slices of x; when abar-coefficients are given the
// reference is written in its forward-noised form c0*ref + cn*noise.
void overwrite_refs(Mat& x, const RefSlices& refs, int v3, double c0, double cn,
                    const Mat* noise) {
  if (refs.identity) {
    double* r = x.row(0);
    const auto& id = *refs.identity;
    for (int j = 0; j < v3; ++j) {
      r[j] = c0 * id[j] + (noise ? cn * noise->at(0, j) : 0.0);
    }
  }
  if (refs.motion) {
    for (int i = 1; i < x.rows; ++i) {
      double* r = x.row(i);
      const double* m = refs.motion->row(i - 1);
      for (int j = 0; j < v3; ++j) {
        r[j] = c0 * m[j] + (noise ? cn * noise->at(i, j) : 0.0);
      }
    }
  }
  if (refs.pose) {
    for (int i = 1; i < x.rows; ++i) {
      double* r = x.row(i) + v3;
      const double* p = refs.pose->row(i - 1);
      for (int j = 0; j < 3; ++j) {
        r[j] = c0 * p[j] + (noise ? cn * noise->at(i, v3 + j) : 0.0);
      }
    }
  }
}

}  // namespace

FaceRepresentation sample(const Mat& audio, const ReferenceSet& refs, double s,
                          const DenoiserConfig& config, const DenoiserParams& params,
                          const DiffusionSchedule& schedule, const ReprScaler& scaler,
                          uint64_t seed, double trained_mask_prob) {
  config.validate();
  schedule.validate();
  const int n = audio.rows;
  const int v = config.n_vertices;
  const int v3 = 3 * v;
  const int cols = config.repr_cols();
  require(n >= 1 && n <= config.max_frames, "sample: frame count out of range");
  require(audio.cols == config.audio_dim, "sample: audio dim mismatch");
  if (s != 1.0) {
    require(trained_mask_prob > 0.0,
            "sample: guidance scale s != 1 requires a model trained with masked conditioning");
  }
  if (!config.diffuse_identity) {
    require(refs.identity.has_value(),
            "sample: this model does not synthesize identity; an identity reference is required");
  }
  if (!config.diffuse_pose) {
    require(refs.pose.has_value(),
            "sample: this model does not synthesize pose; a pose reference is required");
  }

  // Normalize references into diffusion space once.
  RefSlices norm_refs;
  if (refs.identity) {
    require(static_cast<int>(refs.identity->vertices.size()) == v3,
            "sample: identity reference vertex count mismatch");
    std::vector<double> id(v3);
    for (int j = 0; j < v3; ++j) {
      id[j] = (refs.identity->vertices[j] - scaler.identity_mean[j]) / scaler.identity_scale;
    }
    norm_refs.identity = std::move(id);
  }
  if (refs.pose) {
    require(refs.pose->n_frames == n, "sample: pose reference frame count mismatch");
    Mat p(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) p.at(i, j) = refs.pose->rotation(i)[j] / scaler.pose_scale;
    }
    norm_refs.pose = std::move(p);
  }
  if (refs.motion) {
    require(refs.motion->n_frames == n && refs.motion->n_vertices == v,
            "sample: motion reference shape mismatch");
    Mat m(n, v3);
    for (int i = 0; i < n; ++i) {
      const double* src = refs.motion->frame(i);
      for (int j = 0; j < v3; ++j) m.at(i, j) = src[j] / scaler.motion_scale;
    }
    norm_refs.motion = std::move(m);
  }
  const bool any_ref = norm_refs.identity || norm_refs.pose || norm_refs.motion;

  Prng rng(seed);
  Mat noise(n + 1, cols);
  for (double& ni : noise.a) ni = rng.normal();
  Mat x = noise;
  if (any_ref) {
    const double abar_T = schedule.alpha_bar(schedule.T);
    overwrite_refs(x, norm_refs, v3, std::sqrt(abar_T), std::sqrt(1.0 - abar_T), &noise);
  }
  for (int t = schedule.T; t >= 1; --t) {
    Mat x_hat0 = guided_predict(t, audio, x, s, config, params);
    // pin referenced components of the prediction
    overwrite_refs(x_hat0, norm_refs, v3, 1.0, 0.0, nullptr);

    for (double& ni : noise.a) ni = rng.normal();
    NoisedState next = ddpm_step(x_hat0.a, t, noise.a, schedule);
    x.a = std::move(next.values);
    if (t > 1 && any_ref) {
      // keep referenced slices exact: q_sample of the reference at step t-1
      const double abar = schedule.alpha_bar(t - 1);
      overwrite_refs(x, norm_refs, v3, std::sqrt(abar), std::sqrt(1.0 - abar), &noise);
    }
  }

  Mat raw = scaler.denormalize(x);
  FaceRepresentation out = FaceRepresentation::unflatten(raw, v);
  // referenced slices are returned verbatim, not through the scaler round trip
  if (refs.identity) out.identity = *refs.identity;
  if (refs.pose) out.pose = *refs.pose;
  if (refs.motion) out.motion = *refs.motion;
  return out;
}

std::vector<FaceRepresentation> sample_batch(const Mat& audio, const ReferenceSet& refs, double s,
                                             const DenoiserConfig& config,
                                             const DenoiserParams& params,
                                             const DiffusionSchedule& schedule,
                                             const ReprScaler& scaler,
                                             const std::vector<uint64_t>& seeds,
                                             double trained_mask_prob) {
  std::vector<FaceRepresentation> out(seeds.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(seeds.size()); ++i) {
    out[i] = sample(audio, refs, s, config, params, schedule, scaler, seeds[i],
                    trained_mask_prob);
  }
  return out;
}

}  // namespace facediff
