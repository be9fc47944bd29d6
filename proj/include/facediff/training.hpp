#pragma once

#include <functional>
#include <optional>
#include <string>

#include "facediff/conditioning.hpp"
#include "facediff/denoiser.hpp"
#include "facediff/diffusion.hpp"
#include "facediff/optim.hpp"
#include "facediff/rng.hpp"
#include "facediff/sync_expert.hpp"
#include "facediff/types.hpp"

namespace facediff {

struct LossWeights {
  double face = 1.0;
  double sync = 0.1;
  double lip = 1.0;
  double pose = 1.0;
  void validate() const;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-4;
  uint64_t seed = 0;
  double mask_prob = 0.10;
  int identity_frames_k = 32;  // K for identity averaging, clamped to N
  int sync_segments = 2;
  int log_every = 50;
  std::string log_path;  // append-only CSV: step,face,sync,lip,pose,total
  int checkpoint_every = 0;
  void validate() const;
};

// Affine per-component standardization applied to flattened representations
// before diffusion. Identity sits near 100 mm while motion is a few mm and
// pose a fraction of a radian; diffusing them against unit noise needs a
// common scale. Stored in the checkpoint and inverted on every output.
struct ReprScaler {
  std::vector<double> identity_mean;  // 3V
  double identity_scale = 1.0;
  double motion_scale = 1.0;
  double pose_scale = 1.0;

  Mat normalize(const Mat& x0) const;
  Mat denormalize(const Mat& x) const;
  void validate() const;
};

ReprScaler fit_scaler(const std::vector<FaceRepresentation>& reprs);

// One training example: normalized flattened representation + resampled audio.
struct TrainSample {
  Mat x0;     // (N+1) x (3V+3), scaler-normalized
  Mat audio;  // N x Z_a
};

struct StepLosses {
  double face = 0.0;
  double sync = 0.0;
  double lip = 0.0;
  double pose = 0.0;
  double total = 0.0;
};

// MSE over all entries except the 3 zero-pad entries of the identity row.
double face_loss(const Mat& x0, const Mat& x_hat0);

// MSE over lip-vertex coordinates only.
double lip_loss(const Mat& motion, const Mat& pred_motion, const RigSpec& rig);

// MSE between first-order temporal differences of pose tracks (N >= 2).
double pose_loss(const Mat& pose, const Mat& pred_pose);

double total_loss(const StepLosses& components, const LossWeights& weights);

// One optimizer step over a batch: per sample draw t and noise, noise the
// representation, mask the condition with probability mask_prob, predict,
// combine the weighted loss gradients, and apply one update. Deterministic
// for a fixed rng state; samples are processed in parallel and merged in
// batch order.
StepLosses train_step(const std::vector<const TrainSample*>& batch, DenoiserParams& params,
                      Adam& opt, const SyncExpertParams* expert, const DiffusionSchedule& schedule,
                      const LossWeights& weights, const TrainConfig& config,
                      const RigSpec& rig, const DenoiserConfig& model_config, Prng& rng);

using CheckpointHook = std::function<void(int step, const DenoiserParams&)>;
using LogHook = std::function<void(int step, const StepLosses&)>;

// Full loop: uniform batches with replacement, CSV logging, optional
// checkpoint hook. Aborts with diagnostics if the loss goes non-finite.
DenoiserParams train_denoiser(const std::vector<TrainSample>& data,
                              const DenoiserConfig& model_config,
                              const SyncExpertParams* expert, const RigSpec& rig,
                              const DiffusionSchedule& schedule, const LossWeights& weights,
                              const TrainConfig& config, const CheckpointHook& on_checkpoint = {},
                              const LogHook& on_log = {});

}  // namespace facediff
