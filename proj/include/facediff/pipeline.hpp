#pragma once

#include "facediff/dataio.hpp"
#include "facediff/metrics.hpp"
#include "facediff/sampler.hpp"
#include "facediff/synthetic.hpp"
#include "facediff/training.hpp"

namespace facediff {

// Dataset turned into model-ready tensors: ground-truth decompositions, the
// fitted scaler, resampled audio, and normalized training samples.
struct PreparedData {
  RigSpec rig;
  ReprScaler scaler;
  int fps = 30;
  std::vector<FaceRepresentation> reprs;  // raw ground truth per utterance
  std::vector<Mat> audio;                 // resampled to mesh frames
  std::vector<TrainSample> samples;       // normalized
};

PreparedData prepare_training_data(const SyntheticDataset& dataset, int identity_frames_k,
                                   uint64_t seed);

// Expert training pairs (lip columns of normalized motion + resampled audio).
std::vector<SyncUtterance> make_sync_dataset(const PreparedData& data);

// RMS amplitude of ground-truth lip motion over frames and lip coordinates.
double lip_motion_rms(const std::vector<FaceRepresentation>& reprs, const RigSpec& rig);

struct EvalOptions {
  double guidance_scale = 1.0;
  uint64_t seed = 0;
  int subset_size = 20;       // per multimodality subset
  int identity_frames_k = 32;
  int mult_audios = 1;        // audios averaged in the multimodality protocol
  bool mult_with_refs = false;  // pin identity+pose during the mult protocol
};

// Paper-style protocol on synthetic data: lip-vertex error and NLDD are
// scored in zero-pose space with identity and pose given as references;
// multimodality compares two seed-disjoint subsets per audio.
EvalReport evaluate_model(const Checkpoint& ckpt, const SyntheticDataset& dataset,
                          const EvalOptions& options);

}  // namespace facediff
