#pragma once

#include <cstdint>
#include <vector>

#include "facediff/kernels.hpp"
#include "facediff/types.hpp"

namespace facediff {

struct SyncExpertConfig {
  int segment_len = 5;  // n, frames per scored segment
  int lip_vertex_count = 0;
  int audio_dim = 0;
  int hidden_dim = 128;
  int embed_dim = 64;

  int lip_input_dim() const { return segment_len * 3 * lip_vertex_count; }
  int audio_input_dim() const { return segment_len * audio_dim; }
  void validate() const;

  bool operator==(const SyncExpertConfig&) const = default;
};

// Two small MLP encoders over flattened segments; both emit unit-norm
// embeddings, so 1 - cosine is a distance in [0, 2].
struct SyncExpertParams {
  SyncExpertConfig config;
  Mat lip_w1, lip_b1, lip_w2, lip_b2;
  Mat aud_w1, aud_b1, aud_w2, aud_b2;
};

std::vector<std::pair<std::string, Mat*>> enumerate_tensors(SyncExpertParams& p);

SyncExpertParams make_sync_params(const SyncExpertConfig& config);
SyncExpertParams init_sync_params(const SyncExpertConfig& config, uint64_t seed);

// Unit-norm embedding of a flattened segment (length = input dim of encoder).
std::vector<double> embed_lip(const SyncExpertParams& p, const std::vector<double>& segment);
std::vector<double> embed_audio(const SyncExpertParams& p, const std::vector<double>& segment);

// 1 - cosine(e_lip, e_audio): 0 = in sync per the expert.
double sync_distance(const Mat& lip_motion_segment, const Mat& audio_segment,
                     const SyncExpertParams& params);

// One utterance of expert training data on a shared timeline.
struct SyncUtterance {
  Mat lip_motion;  // N x 3*V_lip
  Mat audio;       // N x Z_a
};

struct SyncTrainOptions {
  int epochs = 10;
  int pairs_per_epoch = 2048;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  int min_shift = 3;  // temporal-offset negatives are shifted at least this far
  bool shuffle_labels = false;  // null-model control for testing
};

// Binary cross-entropy on p = (cosine+1)/2; positives are aligned segments,
// negatives split 50/50 between cross-utterance and >=min_shift temporal
// offsets.
SyncExpertParams train_sync_expert(const std::vector<SyncUtterance>& dataset,
                                   const SyncExpertConfig& config,
                                   const SyncTrainOptions& options);

// Mean expert distance over num_segments random aligned windows of the
// prediction. grad_motion (N x 3V, optional) receives d(loss)/d(pred_motion);
// the expert itself stays frozen.
double sync_loss(const Mat& pred_motion, const Mat& audio, const RigSpec& rig,
                 const SyncExpertParams& params, int num_segments, uint64_t seed,
                 Mat* grad_motion = nullptr);

// Extracts the lip-vertex columns of a full motion matrix (N x 3V -> N x 3*V_lip).
Mat lip_columns(const Mat& motion, const RigSpec& rig);

}  // namespace facediff
