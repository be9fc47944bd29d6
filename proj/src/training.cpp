#include "facediff/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "facediff/optim.hpp"

namespace facediff {

void LossWeights::validate() const {
  require(face >= 0 && sync >= 0 && lip >= 0 && pose >= 0, "LossWeights: negative weight");
  require(std::isfinite(face) && std::isfinite(sync) && std::isfinite(lip) && std::isfinite(pose),
          "LossWeights: non-finite weight");
}

void TrainConfig::validate() const {
  require(steps >= 1 && batch_size >= 1, "TrainConfig: steps/batch_size positive");
  require(learning_rate > 0, "TrainConfig: learning rate positive");
  require(mask_prob >= 0.0 && mask_prob <= 1.0, "TrainConfig: mask_prob out of [0,1]");
  require(identity_frames_k >= 1, "TrainConfig: identity_frames_k positive");
  require(sync_segments >= 1, "TrainConfig: sync_segments positive");
}

void ReprScaler::validate() const {
  require(!identity_mean.empty() && identity_mean.size() % 3 == 0, "ReprScaler: bad mean size");
  require(identity_scale > 0 && motion_scale > 0 && pose_scale > 0, "ReprScaler: scales positive");
}

Mat ReprScaler::normalize(const Mat& x0) const {
  validate();
  const int v3 = static_cast<int>(identity_mean.size());
  require(x0.cols == v3 + 3, "ReprScaler: column mismatch");
  Mat out = x0;
  for (int j = 0; j < v3; ++j) out.at(0, j) = (x0.at(0, j) - identity_mean[j]) / identity_scale;
  for (int i = 1; i < x0.rows; ++i) {
    double* r = out.row(i);
    for (int j = 0; j < v3; ++j) r[j] /= motion_scale;
    for (int j = v3; j < v3 + 3; ++j) r[j] /= pose_scale;
  }
  return out;
}

Mat ReprScaler::denormalize(const Mat& x) const {
  validate();
  const int v3 = static_cast<int>(identity_mean.size());
  require(x.cols == v3 + 3, "ReprScaler: column mismatch");
  Mat out = x;
  for (int j = 0; j < v3; ++j) out.at(0, j) = x.at(0, j) * identity_scale + identity_mean[j];
  for (int i = 1; i < x.rows; ++i) {
    double* r = out.row(i);
    for (int j = 0; j < v3; ++j) r[j] *= motion_scale;
    for (int j = v3; j < v3 + 3; ++j) r[j] *= pose_scale;
  }
  return out;
}

ReprScaler fit_scaler(const std::vector<FaceRepresentation>& reprs) {
  require(!reprs.empty(), "fit_scaler: empty dataset");
  const size_t v3 = reprs.front().identity.vertices.size();
  ReprScaler s;
  s.identity_mean.assign(v3, 0.0);
  for (const auto& r : reprs) {
    require(r.identity.vertices.size() == v3, "fit_scaler: inconsistent vertex counts");
    for (size_t j = 0; j < v3; ++j) s.identity_mean[j] += r.identity.vertices[j];
  }
  for (double& x : s.identity_mean) x /= reprs.size();

  double id_sq = 0.0, mo_sq = 0.0, po_sq = 0.0;
  size_t id_n = 0, mo_n = 0, po_n = 0;
  for (const auto& r : reprs) {
    for (size_t j = 0; j < v3; ++j) {
      const double d = r.identity.vertices[j] - s.identity_mean[j];
      id_sq += d * d;
      ++id_n;
    }
    for (double m : r.motion.offsets) {
      mo_sq += m * m;
      ++mo_n;
    }
    for (double p : r.pose.rotations) {
      po_sq += p * p;
      ++po_n;
    }
  }
  s.identity_scale = std::max(std::sqrt(id_sq / std::max<size_t>(id_n, 1)), 1e-3);
  s.motion_scale = std::max(std::sqrt(mo_sq / std::max<size_t>(mo_n, 1)), 1e-3);
  s.pose_scale = std::max(std::sqrt(po_sq / std::max<size_t>(po_n, 1)), 1e-3);
  return s;
}

double face_loss(const Mat& x0, const Mat& x_hat0) {
  require(x0.same_shape(x_hat0), "face_loss: shape mismatch");
  require(x0.cols > 3, "face_loss: too few columns");
  double sum = 0.0;
  for (int i = 0; i < x0.rows; ++i) {
    const double* a = x0.row(i);
    const double* b = x_hat0.row(i);
    const int jmax = (i == 0) ? x0.cols - 3 : x0.cols;  // skip identity-row pad
    for (int j = 0; j < jmax; ++j) {
      const double d = b[j] - a[j];
      sum += d * d;
    }
  }
  const size_t count = static_cast<size_t>(x0.rows) * x0.cols - 3;
  return sum / count;
}

double lip_loss(const Mat& motion, const Mat& pred_motion, const RigSpec& rig) {
  require(motion.same_shape(pred_motion), "lip_loss: shape mismatch");
  require(motion.cols == 3 * rig.n_vertices(), "lip_loss: motion width mismatch");
  const auto idx = rig.lip_vertex_indices();
  require(!idx.empty(), "lip_loss: empty lip mask");
  double sum = 0.0;
  for (int i = 0; i < motion.rows; ++i) {
    const double* a = motion.row(i);
    const double* b = pred_motion.row(i);
    for (int v : idx) {
      for (int k = 0; k < 3; ++k) {
        const double d = b[3 * v + k] - a[3 * v + k];
        sum += d * d;
      }
    }
  }
  return sum / (static_cast<double>(motion.rows) * idx.size() * 3.0);
}

double pose_loss(const Mat& pose, const Mat& pred_pose) {
  require(pose.same_shape(pred_pose), "pose_loss: shape mismatch");
  require(pose.rows >= 2, "pose_loss: need at least two frames");
  double sum = 0.0;
  for (int i = 0; i + 1 < pose.rows; ++i) {
    for (int j = 0; j < pose.cols; ++j) {
      const double dg = pose.at(i + 1, j) - pose.at(i, j);
      const double dp = pred_pose.at(i + 1, j) - pred_pose.at(i, j);
      const double d = dp - dg;
      sum += d * d;
    }
  }
  return sum / (static_cast<double>(pose.rows - 1) * pose.cols);
}

double total_loss(const StepLosses& c, const LossWeights& w) {
  w.validate();
  require(std::isfinite(c.face) && std::isfinite(c.sync) && std::isfinite(c.lip) &&
              std::isfinite(c.pose),
          "total_loss: non-finite component");
  return w.face * c.face + w.sync * c.sync + w.lip * c.lip + w.pose * c.pose;
}

namespace {

struct SampleDraw {
  int t = 1;
  std::vector<double> noise;
  bool masked = false;
  uint64_t sync_seed = 0;
};

// Face-term MSE with the ablation-aware inclusion mask; fills d(loss)/d(xhat).
double masked_face_loss(const Mat& x0, const Mat& xhat, const DenoiserConfig& cfg, Mat& grad) {
  const int v3 = 3 * cfg.n_vertices;
  grad = Mat(x0.rows, x0.cols);
  size_t count = 0;
  double sum = 0.0;
  for (int i = 0; i < x0.rows; ++i) {
    if (i == 0 && !cfg.diffuse_identity) continue;
    const int jmax = (i == 0) ? v3 : ((cfg.diffuse_pose) ? x0.cols : v3);
    for (int j = 0; j < jmax; ++j) {
      const double d = xhat.at(i, j) - x0.at(i, j);
      sum += d * d;
      grad.at(i, j) = 2.0 * d;
      ++count;
    }
  }
  if (count == 0) return 0.0;
  for (double& g : grad.a) g /= static_cast<double>(count);
  return sum / static_cast<double>(count);
}

Mat motion_slice(const Mat& x, int v3) {
  Mat m(x.rows - 1, v3);
  for (int i = 1; i < x.rows; ++i) std::memcpy(m.row(i - 1), x.row(i), sizeof(double) * v3);
  return m;
}

Mat pose_slice(const Mat& x, int v3) {
  Mat p(x.rows - 1, 3);
  for (int i = 1; i < x.rows; ++i) {
    std::memcpy(p.row(i - 1), x.row(i) + v3, sizeof(double) * 3);
  }
  return p;
}

}  // namespace

StepLosses train_step(const std::vector<const TrainSample*>& batch, DenoiserParams& params,
                      Adam& opt, const SyncExpertParams* expert, const DiffusionSchedule& schedule,
                      const LossWeights& weights, const TrainConfig& config, const RigSpec& rig,
                      const DenoiserConfig& model_config, Prng& rng) {
  require(!batch.empty(), "train_step: empty batch");
  const int bsz = static_cast<int>(batch.size());
  const int v3 = 3 * model_config.n_vertices;

  // All randomness is drawn up front in batch order so the parallel section
  // below cannot perturb the stream.
  MaskPlan mask_plan;
  mask_plan.mask_prob = config.mask_prob;
  std::vector<SampleDraw> draws(bsz);
  for (int b = 0; b < bsz; ++b) {
    const TrainSample& s = *batch[b];
    draws[b].t = rng.uniform_int(1, schedule.T);
    draws[b].noise.resize(s.x0.size());
    for (double& x : draws[b].noise) x = rng.normal();
    draws[b].masked = draw_mask(mask_plan, rng);
    draws[b].sync_seed = rng.next_u64();
  }

  std::vector<DenoiserParams> sample_grads(bsz);
  std::vector<StepLosses> sample_losses(bsz);

#pragma omp parallel for schedule(static)
  for (int b = 0; b < bsz; ++b) {
    const TrainSample& s = *batch[b];
    const SampleDraw& d = draws[b];
    const int n = s.audio.rows;

    NoisedState ns = q_sample(s.x0.a, d.t, d.noise, schedule);
    Mat x_t(s.x0.rows, s.x0.cols);
    x_t.a = std::move(ns.values);
    if (!model_config.diffuse_identity) {
      std::memcpy(x_t.row(0), s.x0.row(0), sizeof(double) * x_t.cols);
    }
    if (!model_config.diffuse_pose) {
      for (int i = 1; i < x_t.rows; ++i) {
        std::memcpy(x_t.row(i) + v3, s.x0.row(i) + v3, sizeof(double) * 3);
      }
    }

    const Mat audio_in = mask_audio(s.audio, d.masked, params);

    CacheHandle cache;
    const Mat xhat = denoiser_forward(d.t, audio_in, x_t, model_config, params, cache.get());

    StepLosses& L = sample_losses[b];
    Mat d_out(xhat.rows, xhat.cols);

    {
      Mat d_face;
      L.face = masked_face_loss(s.x0, xhat, model_config, d_face);
      for (size_t i = 0; i < d_out.a.size(); ++i) d_out.a[i] += weights.face * d_face.a[i];
    }

    const Mat gt_motion = motion_slice(s.x0, v3);
    const Mat pred_motion = motion_slice(xhat, v3);

    if (weights.lip > 0.0) {
      L.lip = lip_loss(gt_motion, pred_motion, rig);
      const auto idx = rig.lip_vertex_indices();
      const double scale = weights.lip * 2.0 / (static_cast<double>(gt_motion.rows) * idx.size() * 3.0);
      for (int i = 0; i < gt_motion.rows; ++i) {
        double* g = d_out.row(i + 1);
        for (int v : idx) {
          for (int k = 0; k < 3; ++k) {
            g[3 * v + k] += scale * (pred_motion.at(i, 3 * v + k) - gt_motion.at(i, 3 * v + k));
          }
        }
      }
    }

    if (weights.pose > 0.0 && model_config.diffuse_pose && n >= 2) {
      const Mat gt_pose = pose_slice(s.x0, v3);
      const Mat pred_pose = pose_slice(xhat, v3);
      L.pose = pose_loss(gt_pose, pred_pose);
      const int m = gt_pose.rows;
      const double scale = weights.pose * 2.0 / (static_cast<double>(m - 1) * 3.0);
      // e_i = (dpred_i - dgt_i); d(loss)/d(pred_j) = scale * (e_{j-1} - e_j)
      for (int j = 0; j < m; ++j) {
        double* g = d_out.row(j + 1) + v3;
        for (int k = 0; k < 3; ++k) {
          double e_prev = 0.0, e_next = 0.0;
          if (j - 1 >= 0) {
            e_prev = (pred_pose.at(j, k) - pred_pose.at(j - 1, k)) -
                     (gt_pose.at(j, k) - gt_pose.at(j - 1, k));
          }
          if (j + 1 < m) {
            e_next = (pred_pose.at(j + 1, k) - pred_pose.at(j, k)) -
                     (gt_pose.at(j + 1, k) - gt_pose.at(j, k));
          }
          g[k] += scale * (e_prev - e_next);
        }
      }
    }

    if (weights.sync > 0.0 && expert && n >= expert->config.segment_len) {
      Mat d_sync;
      L.sync = sync_loss(pred_motion, s.audio, rig, *expert, config.sync_segments, d.sync_seed,
                         &d_sync);
      for (int i = 0; i < d_sync.rows; ++i) {
        double* g = d_out.row(i + 1);
        const double* ds = d_sync.row(i);
        for (int j = 0; j < v3; ++j) g[j] += weights.sync * ds[j];
      }
    }

    L.total = total_loss(L, weights);

    // mean over the batch
    for (double& g : d_out.a) g /= bsz;

    sample_grads[b] = make_params(model_config);
    Mat grad_audio;
    denoiser_backward(d_out, *cache.get(), model_config, params, sample_grads[b],
                      d.masked ? &grad_audio : nullptr);
    if (d.masked) {
      // the null embedding is broadcast to every frame
      for (int i = 0; i < grad_audio.rows; ++i) {
        const double* r = grad_audio.row(i);
        for (int j = 0; j < grad_audio.cols; ++j) sample_grads[b].null_audio.a[j] += r[j];
      }
    }
  }

  // deterministic merge in batch order
  DenoiserParams grads = make_params(model_config);
  auto acc = enumerate_tensors(grads);
  for (int b = 0; b < bsz; ++b) {
    auto src = enumerate_tensors(sample_grads[b]);
    for (size_t i = 0; i < acc.size(); ++i) {
      const auto& s = src[i].second->a;
      auto& d = acc[i].second->a;
      for (size_t j = 0; j < d.size(); ++j) d[j] += s[j];
    }
  }

  auto plist = enumerate_tensors(params);
  opt.step(plist, acc);

  StepLosses mean;
  for (const auto& L : sample_losses) {
    mean.face += L.face;
    mean.sync += L.sync;
    mean.lip += L.lip;
    mean.pose += L.pose;
    mean.total += L.total;
  }
  mean.face /= bsz;
  mean.sync /= bsz;
  mean.lip /= bsz;
  mean.pose /= bsz;
  mean.total /= bsz;
  return mean;
}

DenoiserParams train_denoiser(const std::vector<TrainSample>& data,
                              const DenoiserConfig& model_config, const SyncExpertParams* expert,
                              const RigSpec& rig, const DiffusionSchedule& schedule,
                              const LossWeights& weights, const TrainConfig& config,
                              const CheckpointHook& on_checkpoint, const LogHook& on_log) {
  config.validate();
  weights.validate();
  model_config.validate();
  require(!data.empty(), "train_denoiser: empty dataset");

  DenoiserParams params = init_params(model_config, config.seed);
  Adam opt(config.learning_rate);
  Prng rng(config.seed ^ 0x7261696E21ull);

  std::ofstream csv;
  if (!config.log_path.empty()) {
    const bool fresh = [&] {
      std::ifstream probe(config.log_path);
      return !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
    }();
    csv.open(config.log_path, std::ios::app);
    require(csv.good(), "train_denoiser: cannot open loss log " + config.log_path);
    if (fresh) csv << "step,face,sync,lip,pose,total\n";
  }

  for (int step = 1; step <= config.steps; ++step) {
    std::vector<const TrainSample*> batch(config.batch_size);
    for (int b = 0; b < config.batch_size; ++b) {
      batch[b] = &data[rng.uniform_int(0, static_cast<int>(data.size()) - 1)];
    }
    const StepLosses L =
        train_step(batch, params, opt, expert, schedule, weights, config, rig, model_config, rng);
    if (!std::isfinite(L.total)) {
      throw std::runtime_error("train_denoiser: non-finite loss at step " + std::to_string(step) +
                               " (face=" + std::to_string(L.face) +
                               ", sync=" + std::to_string(L.sync) +
                               ", lip=" + std::to_string(L.lip) +
                               ", pose=" + std::to_string(L.pose) + ")");
    }
    const bool log_now = (config.log_every > 0 && step % config.log_every == 0) ||
                         step == config.steps || step == 1;
    if (log_now) {
      if (csv.is_open()) {
        csv << step << ',' << L.face << ',' << L.sync << ',' << L.lip << ',' << L.pose << ','
            << L.total << '\n';
        csv.flush();
      }
      if (on_log) on_log(step, L);
    }
    if (on_checkpoint && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      on_checkpoint(step, params);
    }
  }
  return params;
}

}  // namespace facediff
