#include "facediff/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "facediff/mesh_repr.hpp"

namespace facediff {

PreparedData prepare_training_data(const SyntheticDataset& dataset, int identity_frames_k,
                                   uint64_t seed) {
  require(!dataset.utterances.empty(), "prepare_training_data: empty dataset");
  PreparedData out;
  out.rig = dataset.rig;
  out.fps = dataset.config.fps;
  out.reprs.reserve(dataset.utterances.size());
  out.audio.reserve(dataset.utterances.size());
  for (size_t i = 0; i < dataset.utterances.size(); ++i) {
    const auto& utt = dataset.utterances[i];
    const int k = std::min(identity_frames_k, utt.mesh.n_frames);
    out.reprs.push_back(
        decompose(utt.mesh, utt.pose, dataset.rig, k, derive_seed(seed, 3, i)));
    out.audio.push_back(resample_audio(utt.audio, utt.mesh.n_frames, utt.mesh.fps));
  }
  out.scaler = fit_scaler(out.reprs);
  out.samples.reserve(out.reprs.size());
  for (size_t i = 0; i < out.reprs.size(); ++i) {
    TrainSample s;
    s.x0 = out.scaler.normalize(out.reprs[i].flatten());
    s.audio = out.audio[i];
    out.samples.push_back(std::move(s));
  }
  return out;
}

std::vector<SyncUtterance> make_sync_dataset(const PreparedData& data) {
  std::vector<SyncUtterance> out;
  out.reserve(data.samples.size());
  const int v3 = 3 * data.rig.n_vertices();
  for (const auto& s : data.samples) {
    Mat motion(s.x0.rows - 1, v3);
    for (int i = 1; i < s.x0.rows; ++i) {
      std::copy(s.x0.row(i), s.x0.row(i) + v3, motion.row(i - 1));
    }
    SyncUtterance u;
    u.lip_motion = lip_columns(motion, data.rig);
    u.audio = s.audio;
    out.push_back(std::move(u));
  }
  return out;
}

double lip_motion_rms(const std::vector<FaceRepresentation>& reprs, const RigSpec& rig) {
  require(!reprs.empty(), "lip_motion_rms: empty set");
  const auto idx = rig.lip_vertex_indices();
  double sq = 0.0;
  size_t count = 0;
  for (const auto& r : reprs) {
    for (int i = 0; i < r.motion.n_frames; ++i) {
      const double* m = r.motion.frame(i);
      for (int v : idx) {
        for (int k = 0; k < 3; ++k) {
          sq += m[3 * v + k] * m[3 * v + k];
          ++count;
        }
      }
    }
  }
  return std::sqrt(sq / count);
}

EvalReport evaluate_model(const Checkpoint& ckpt, const SyntheticDataset& dataset,
                          const EvalOptions& options) {
  const PreparedData data =
      prepare_training_data(dataset, options.identity_frames_k, options.seed);
  EvalReport report;
  report.sequences = static_cast<int>(data.reprs.size());
  report.mult_subset_size = options.subset_size;

  double lve_weighted = 0.0;
  double nldd_sum = 0.0;
  double max_lve = 0.0;
  long total_frames = 0;
  const int n_utts = static_cast<int>(data.reprs.size());

#pragma omp parallel for schedule(dynamic) \
    reduction(+ : lve_weighted, nldd_sum, total_frames) reduction(max : max_lve)
  for (int i = 0; i < n_utts; ++i) {
    const FaceRepresentation& gt = data.reprs[i];
    ReferenceSet refs;
    refs.identity = gt.identity;
    refs.pose = gt.pose;
    const FaceRepresentation pred =
        sample(data.audio[i], refs, options.guidance_scale, ckpt.config, ckpt.params,
               ckpt.schedule, ckpt.scaler, derive_seed(options.seed, 4, i),
               ckpt.trained_mask_prob);
    const FaceMeshSequence pred_zp = render_zero_pose(pred, data.fps);
    const FaceMeshSequence gt_zp = render_zero_pose(gt, data.fps);
    const auto [avg, mx] = lip_vertex_error(pred_zp, gt_zp, data.rig);
    lve_weighted += avg * gt.n_frames();
    total_frames += gt.n_frames();
    max_lve = std::max(max_lve, mx);
    nldd_sum += nldd(pred_zp, gt_zp, data.rig);
  }
  report.avg_lve = lve_weighted / total_frames;
  report.max_lve = max_lve;
  report.nldd = nldd_sum / report.sequences;

  // multimodality protocol: two seed-disjoint subsets per audio
  const int audios = std::min<int>(options.mult_audios, static_cast<int>(data.audio.size()));
  MultReport mult;
  for (int a = 0; a < audios; ++a) {
    ReferenceSet refs;
    if (options.mult_with_refs || !ckpt.config.diffuse_identity) {
      refs.identity = data.reprs[a].identity;
    }
    if (options.mult_with_refs || !ckpt.config.diffuse_pose) {
      refs.pose = data.reprs[a].pose;
    }
    std::vector<uint64_t> seeds_a(options.subset_size), seeds_b(options.subset_size);
    for (int i = 0; i < options.subset_size; ++i) {
      seeds_a[i] = derive_seed(options.seed, 5, static_cast<uint64_t>(a) * 1000 + i);
      seeds_b[i] = derive_seed(options.seed, 6, static_cast<uint64_t>(a) * 1000 + i);
    }
    const auto sa = sample_batch(data.audio[a], refs, options.guidance_scale, ckpt.config,
                                 ckpt.params, ckpt.schedule, ckpt.scaler, seeds_a,
                                 ckpt.trained_mask_prob);
    const auto sb = sample_batch(data.audio[a], refs, options.guidance_scale, ckpt.config,
                                 ckpt.params, ckpt.schedule, ckpt.scaler, seeds_b,
                                 ckpt.trained_mask_prob);
    const MultReport m = multimodality(sa, sb, data.rig, data.fps);
    mult.identity += m.identity;
    mult.motion += m.motion;
    mult.pose += m.pose;
    mult.mesh += m.mesh;
  }
  if (audios > 0) {
    mult.identity /= audios;
    mult.motion /= audios;
    mult.pose /= audios;
    mult.mesh /= audios;
  }
  report.mult = mult;

  std::ostringstream cfg;
  cfg << "latent_dim=" << ckpt.config.latent_dim << " layers=" << ckpt.config.num_layers
      << " heads=" << ckpt.config.num_heads << " T=" << ckpt.schedule.T
      << " s=" << options.guidance_scale << " train_steps=" << ckpt.train_steps;
  report.config_echo = cfg.str();
  return report;
}

}  // namespace facediff
