#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "facediff/diffusion.hpp"
#include "facediff/kernels.hpp"

namespace facediff {

struct DenoiserConfig {
  int latent_dim = 128;  // C, divisible by num_heads
  int num_layers = 4;
  int num_heads = 4;
  int n_vertices = 40;
  int max_frames = 240;
  int audio_dim = 16;
  ScheduleKind schedule_kind = ScheduleKind::Cosine;
  int diffusion_steps = 500;
  // Ablation switches: when false the component is fed to the model as clean
  // ground truth and excluded from prediction targets.
  bool diffuse_identity = true;
  bool diffuse_pose = true;

  int repr_cols() const { return 3 * n_vertices + 3; }
  int mlp_hidden() const { return 4 * latent_dim; }
  void validate() const;

  bool operator==(const DenoiserConfig&) const = default;
};

struct AttnLayerParams {
  Mat ln1_g, ln1_b;
  Mat wq, bq, wk, bk, wv, bv;
  Mat wo, bo;
  Mat ln2_g, ln2_b;
  Mat w1, b1;  // mlp_hidden x C
  Mat w2, b2;  // C x mlp_hidden
};

// All learned state of the denoiser. Weight matrices are out_dim x in_dim and
// act on row-token matrices as Y = X * W^T + b.
struct DenoiserParams {
  Mat w_time, b_time;      // C x C (applied to the sinusoidal step embedding)
  Mat w_audio, b_audio;    // C x Z_a
  Mat w_id, b_id;          // C x 3V
  Mat w_motion, b_motion;  // C x 3V
  Mat w_pose, b_pose;      // C x 3
  Mat emb_time, emb_audio, emb_id, emb_face;  // modality embeddings, C x 1
  Mat null_audio;                             // Z_a x 1, the learned null condition
  std::vector<AttnLayerParams> layers;
  Mat lnf_g, lnf_b;
  Mat w_out, b_out;  // (3V+3) x C
};

// Fixed (name, tensor) enumeration; the single source of order for init,
// optimizer state, serialization, and the flat parameter view.
std::vector<std::pair<std::string, Mat*>> enumerate_tensors(DenoiserParams& p);
std::vector<std::pair<std::string, const Mat*>> enumerate_tensors(const DenoiserParams& p);

size_t param_count(const DenoiserParams& p);

// Zero-valued parameter set with the shapes implied by config (also used as a
// gradient accumulator).
DenoiserParams make_params(const DenoiserConfig& config);

// Seeded scaled-uniform initialization; output projection starts near zero.
DenoiserParams init_params(const DenoiserConfig& config, uint64_t seed);

// Per-call activation cache for backward.
struct DenoiserCache;

struct ForwardResult {
  Mat output;  // (N+1) x (3V+3)
};

// Token layout: [step token | N audio tokens | identity token | N motion-pose
// tokens], 2N+2 total. Output keeps the last N+1 tokens and projects them
// back to representation space.
Mat denoiser_forward(int t, const Mat& audio, const Mat& x_t, const DenoiserConfig& config,
                     const DenoiserParams& params, DenoiserCache* cache = nullptr);

// Accumulates parameter gradients for the forward recorded in cache.
// grad_audio, when given, receives d(loss)/d(audio input) (N x Z_a).
void denoiser_backward(const Mat& grad_output, const DenoiserCache& cache,
                       const DenoiserConfig& config, const DenoiserParams& params,
                       DenoiserParams& grads, Mat* grad_audio = nullptr);

DenoiserCache* new_denoiser_cache();
void free_denoiser_cache(DenoiserCache*);

// RAII wrapper so call sites do not juggle the opaque cache.
class CacheHandle {
 public:
  CacheHandle() : c_(new_denoiser_cache()) {}
  ~CacheHandle() { free_denoiser_cache(c_); }
  CacheHandle(const CacheHandle&) = delete;
  CacheHandle& operator=(const CacheHandle&) = delete;
  DenoiserCache* get() { return c_; }

 private:
  DenoiserCache* c_;
};

// Sinusoidal tables shared by the step embedding and positional encodings.
void sinusoidal_embedding(double pos, int dim, double* out);

}  // namespace facediff
