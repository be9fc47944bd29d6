#include "facediff/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <iostream>

#include <CLI11.hpp>

#include "facediff/dataio.hpp"
#include "facediff/mesh_repr.hpp"
#include "facediff/pipeline.hpp"

namespace facediff {

namespace {

// Flat key=value config support: every subcommand takes --config FILE, whose
// entries fill in flags not given explicitly (command line wins).
std::vector<std::string> expand_config_tokens(int argc, const char* const* argv) {
  std::vector<std::string> tokens;
  for (int i = 1; i < argc; ++i) tokens.emplace_back(argv[i]);

  std::string config_path;
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] == "--config") config_path = tokens[i + 1];
  }
  if (config_path.empty()) return tokens;

  std::ifstream in(config_path);
  if (!in.good()) throw FormatError("cannot open config file: " + config_path);

  std::set<std::string> present;
  for (const auto& t : tokens) {
    if (t.rfind("--", 0) == 0) present.insert(t.substr(0, t.find('=')));
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line without '=': " + line);
    }
    const std::string flag = "--" + line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (present.count(flag)) continue;
    if (value == "true") {
      tokens.push_back(flag);
    } else if (value == "false") {
      continue;
    } else {
      tokens.push_back(flag);
      tokens.push_back(value);
    }
  }
  return tokens;
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "linear") return ScheduleKind::Linear;
  throw InvalidInputError("unknown schedule kind: " + name + " (expected cosine|linear)");
}

RigSpec rig_from_flags(const std::vector<uint8_t>& lip_mask, std::vector<double> pivot,
                       const FaceMeshSequence* pivot_source) {
  std::array<double, 3> p{0.0, 0.0, 0.0};
  if (pivot.size() == 3) {
    p = {pivot[0], pivot[1], pivot[2]};
  } else if (pivot_source) {
    // default pivot: centroid over all frames
    size_t n = 0;
    for (int i = 0; i < pivot_source->n_frames; ++i) {
      const double* f = pivot_source->frame(i);
      for (int v = 0; v < pivot_source->n_vertices; ++v) {
        p[0] += f[3 * v];
        p[1] += f[3 * v + 1];
        p[2] += f[3 * v + 2];
        ++n;
      }
    }
    for (double& c : p) c /= static_cast<double>(n);
  }
  return RigSpec::from_lip_mask(p, lip_mask);
}

PoseRepr pose_from_file(const std::string& path) {
  const AudioFeatureSequence carrier = read_audio(path);
  require(carrier.feature_dim == 3, "pose file must carry exactly 3 channels: " + path);
  PoseRepr pose;
  pose.n_frames = carrier.n_frames;
  pose.rotations = carrier.features;
  pose.validate();
  return pose;
}

void add_make_synthetic(CLI::App& app) {
  auto* sub = app.add_subcommand("make-synthetic", "generate a synthetic dataset");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  auto cfg = std::make_shared<SyntheticConfig>();
  auto out = std::make_shared<std::string>();
  sub->add_option("--out", *out, "output dataset directory")->required();
  sub->add_option("--seed", cfg->seed, "generator seed");
  sub->add_option("--subjects", cfg->num_subjects, "number of subjects");
  sub->add_option("--utterances", cfg->utterances_per_subject, "utterances per subject");
  sub->add_option("--frames", cfg->n_frames, "frames per utterance");
  sub->add_option("--vertices", cfg->n_vertices, "vertices per mesh (>= 24)");
  sub->add_option("--audio-dim", cfg->audio_dim, "audio feature channels");
  sub->add_option("--fps", cfg->fps, "mesh frame rate");
  sub->add_option("--jaw-amplitude", cfg->jaw_amplitude_mm, "lip opening amplitude (mm)");
  sub->add_option("--eyelid-amplitude", cfg->eyelid_amplitude_mm, "eyelid amplitude (mm)");
  sub->add_option("--pose-amplitude", cfg->pose_amplitude_rad, "pose walk amplitude (rad)");
  sub->callback([cfg, out] {
    const SyntheticDataset ds = generate_synthetic(*cfg);
    write_synthetic(ds, *out);
    std::cout << "wrote " << ds.utterances.size() << " utterances to " << *out << "\n";
  });
}

void add_train_sync(CLI::App& app) {
  auto* sub = app.add_subcommand("train-sync", "train the audio-lip sync expert");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string data, out;
    uint64_t seed = 0;
    int epochs = 10, pairs = 2048, segment_len = 5, hidden = 128, embed = 64, k = 32;
    double lr = 1e-3;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--data", a->data, "dataset directory")->required();
  sub->add_option("--out", a->out, "output checkpoint path")->required();
  sub->add_option("--seed", a->seed, "seed");
  sub->add_option("--epochs", a->epochs, "training epochs");
  sub->add_option("--pairs-per-epoch", a->pairs, "contrastive pairs per epoch");
  sub->add_option("--segment-len", a->segment_len, "segment length n (frames)");
  sub->add_option("--hidden", a->hidden, "encoder hidden width");
  sub->add_option("--embed-dim", a->embed, "embedding dimension");
  sub->add_option("--lr", a->lr, "learning rate");
  sub->add_option("--k", a->k, "frames averaged for identity");
  sub->callback([a] {
    const SyntheticDataset ds = load_dataset(a->data);
    const PreparedData data = prepare_training_data(ds, a->k, a->seed);
    SyncExpertConfig ecfg;
    ecfg.segment_len = a->segment_len;
    ecfg.lip_vertex_count = data.rig.lip_count();
    ecfg.audio_dim = ds.config.audio_dim;
    ecfg.hidden_dim = a->hidden;
    ecfg.embed_dim = a->embed;
    SyncTrainOptions opts;
    opts.epochs = a->epochs;
    opts.pairs_per_epoch = a->pairs;
    opts.learning_rate = a->lr;
    opts.seed = a->seed;
    const SyncExpertParams expert = train_sync_expert(make_sync_dataset(data), ecfg, opts);

    Checkpoint ckpt;
    ckpt.config.n_vertices = ds.config.n_vertices;
    ckpt.config.audio_dim = ds.config.audio_dim;
    ckpt.config.max_frames = std::max(240, ds.config.n_frames);
    ckpt.params = init_params(ckpt.config, a->seed);
    ckpt.has_expert = true;
    ckpt.expert_frozen = true;
    ckpt.expert = expert;
    ckpt.schedule = make_schedule(ckpt.config.schedule_kind, ckpt.config.diffusion_steps);
    ckpt.train_steps = 0;
    ckpt.rig = data.rig;
    ckpt.scaler = data.scaler;
    save_checkpoint(ckpt, a->out);
    std::cout << "sync expert trained on " << data.samples.size() << " utterances, saved to "
              << a->out << "\n";
  });
}

void add_train(CLI::App& app) {
  auto* sub = app.add_subcommand("train", "train the diffusion denoiser");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string data, out, expert, log;
    int steps = 4000, batch = 8, k = 32, t_steps = 500, latent = 128, layers = 4, heads = 4;
    int max_frames = 240, sync_segments = 2, log_every = 50, checkpoint_every = 0;
    double lr = 1e-4, mask_prob = 0.10;
    double l_face = 1.0, l_sync = 0.1, l_lip = 1.0, l_pose = 1.0;
    uint64_t seed = 0;
    std::string schedule = "cosine";
    bool no_identity = false, no_pose = false;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--data", a->data, "dataset directory")->required();
  sub->add_option("--out", a->out, "output checkpoint path")->required();
  sub->add_option("--expert", a->expert, "checkpoint holding a trained sync expert");
  sub->add_option("--steps", a->steps, "optimizer steps");
  sub->add_option("--batch-size", a->batch, "batch size");
  sub->add_option("--lr", a->lr, "learning rate");
  sub->add_option("--seed", a->seed, "seed");
  sub->add_option("--mask-prob", a->mask_prob, "masked-conditioning probability");
  sub->add_option("--k", a->k, "frames averaged for identity");
  sub->add_option("--schedule", a->schedule, "variance schedule: cosine|linear");
  sub->add_option("--T", a->t_steps, "diffusion steps");
  sub->add_option("--latent-dim", a->latent, "transformer width");
  sub->add_option("--layers", a->layers, "transformer depth");
  sub->add_option("--heads", a->heads, "attention heads");
  sub->add_option("--max-frames", a->max_frames, "maximum supported frame count");
  sub->add_option("--lambda-face", a->l_face, "face loss weight");
  sub->add_option("--lambda-sync", a->l_sync, "sync loss weight");
  sub->add_option("--lambda-lip", a->l_lip, "lip loss weight");
  sub->add_option("--lambda-pose", a->l_pose, "pose loss weight");
  sub->add_option("--sync-segments", a->sync_segments, "segments per sync loss evaluation");
  sub->add_option("--log", a->log, "loss CSV path");
  sub->add_option("--log-every", a->log_every, "steps between log rows");
  sub->add_option("--checkpoint-every", a->checkpoint_every, "steps between checkpoints");
  sub->add_flag("--no-identity", a->no_identity, "feed identity as input, do not synthesize it");
  sub->add_flag("--no-pose", a->no_pose, "feed pose as input, do not synthesize it");
  sub->callback([a] {
    const SyntheticDataset ds = load_dataset(a->data);
    const PreparedData data = prepare_training_data(ds, a->k, a->seed);

    DenoiserConfig mcfg;
    mcfg.latent_dim = a->latent;
    mcfg.num_layers = a->layers;
    mcfg.num_heads = a->heads;
    mcfg.n_vertices = ds.config.n_vertices;
    mcfg.max_frames = std::max(a->max_frames, ds.config.n_frames);
    mcfg.audio_dim = ds.config.audio_dim;
    mcfg.schedule_kind = parse_schedule(a->schedule);
    mcfg.diffusion_steps = a->t_steps;
    mcfg.diffuse_identity = !a->no_identity;
    mcfg.diffuse_pose = !a->no_pose;

    SyncExpertParams expert;
    bool has_expert = false;
    if (!a->expert.empty()) {
      const Checkpoint eck = load_checkpoint(a->expert);
      require(eck.has_expert, "checkpoint has no sync expert: " + a->expert);
      expert = eck.expert;
      has_expert = true;
    } else {
      require(a->l_sync == 0.0, "training with --lambda-sync > 0 requires --expert");
    }

    const DiffusionSchedule schedule = make_schedule(mcfg.schedule_kind, mcfg.diffusion_steps);
    LossWeights weights{a->l_face, a->l_sync, a->l_lip, a->l_pose};
    TrainConfig tcfg;
    tcfg.steps = a->steps;
    tcfg.batch_size = a->batch;
    tcfg.learning_rate = a->lr;
    tcfg.seed = a->seed;
    tcfg.mask_prob = a->mask_prob;
    tcfg.identity_frames_k = a->k;
    tcfg.sync_segments = a->sync_segments;
    tcfg.log_every = a->log_every;
    tcfg.log_path = a->log;
    tcfg.checkpoint_every = a->checkpoint_every;

    Checkpoint ckpt;
    ckpt.config = mcfg;
    ckpt.has_expert = has_expert;
    ckpt.expert = expert;
    ckpt.schedule = schedule;
    ckpt.rig = data.rig;
    ckpt.scaler = data.scaler;
    ckpt.trained_mask_prob = a->mask_prob;

    const auto save_hook = [&](int step, const DenoiserParams& params) {
      ckpt.params = params;
      ckpt.train_steps = static_cast<uint64_t>(step);
      save_checkpoint(ckpt, a->out);
    };
    const auto log_hook = [](int step, const StepLosses& L) {
      std::printf("step %6d  face %.5f  sync %.5f  lip %.5f  pose %.5f  total %.5f\n", step,
                  L.face, L.sync, L.lip, L.pose, L.total);
    };
    ckpt.params = train_denoiser(data.samples, mcfg, has_expert ? &expert : nullptr, data.rig,
                                 schedule, weights, tcfg, save_hook, log_hook);
    ckpt.train_steps = static_cast<uint64_t>(a->steps);
    save_checkpoint(ckpt, a->out);
    std::cout << "trained " << a->steps << " steps, checkpoint saved to " << a->out << "\n";
  });
}

void add_sample(CLI::App& app) {
  auto* sub = app.add_subcommand("sample", "sample face representations for an audio track");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string model, audio, out, out_repr, ref_identity, ref_pose, ref_motion;
    uint64_t seed = 0;
    double scale = 1.0;
    int frames = 0, fps = 30;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--model", a->model, "trained checkpoint")->required();
  sub->add_option("--audio", a->audio, "audio feature file (DF3A)")->required();
  sub->add_option("--out", a->out, "rendered mesh output (DF3D)");
  sub->add_option("--out-repr", a->out_repr, "raw representation output (DF3A carrier)");
  sub->add_option("--ref-identity", a->ref_identity, "identity reference (single-frame DF3D)");
  sub->add_option("--ref-pose", a->ref_pose, "pose reference (3-channel DF3A)");
  sub->add_option("--ref-motion", a->ref_motion, "motion reference (3V-channel DF3A)");
  sub->add_option("--seed", a->seed, "sampling seed");
  sub->add_option("--scale", a->scale, "guidance scale s");
  sub->add_option("--frames", a->frames, "mesh frames to generate (0 = derive from audio)");
  sub->add_option("--fps", a->fps, "mesh frame rate");
  sub->callback([a] {
    require(!a->out.empty() || !a->out_repr.empty(), "sample: need --out or --out-repr");
    const Checkpoint ckpt = load_checkpoint(a->model);
    if (ckpt.train_steps == 0) {
      std::cerr << "warning: checkpoint has no recorded training steps; output will be noise\n";
    }
    const AudioFeatureSequence audio = read_audio(a->audio);
    const int n = a->frames > 0
                      ? a->frames
                      : std::max(1, static_cast<int>(std::lround(
                                        static_cast<double>(audio.n_frames) * a->fps /
                                        audio.feature_rate)));
    const Mat audio_rs = resample_audio(audio, n, a->fps);

    ReferenceSet refs;
    if (!a->ref_identity.empty()) {
      const FaceMeshSequence id_mesh = read_mesh(a->ref_identity);
      require(id_mesh.n_frames == 1, "identity reference must hold exactly one frame");
      IdentityRepr id;
      id.vertices = id_mesh.vertices;
      refs.identity = std::move(id);
    }
    if (!a->ref_pose.empty()) refs.pose = pose_from_file(a->ref_pose);
    if (!a->ref_motion.empty()) {
      const AudioFeatureSequence carrier = read_audio(a->ref_motion);
      require(carrier.feature_dim == 3 * ckpt.config.n_vertices,
              "motion reference must carry 3V channels");
      MotionRepr motion;
      motion.n_frames = carrier.n_frames;
      motion.n_vertices = ckpt.config.n_vertices;
      motion.offsets = carrier.features;
      refs.motion = std::move(motion);
    }

    const FaceRepresentation repr =
        sample(audio_rs, refs, a->scale, ckpt.config, ckpt.params, ckpt.schedule, ckpt.scaler,
               a->seed, ckpt.trained_mask_prob);
    if (!a->out_repr.empty()) write_representation(repr, a->fps, a->out_repr);
    if (!a->out.empty()) write_mesh(render(repr, ckpt.rig, a->fps), a->out);
    std::cout << "sampled " << n << " frames\n";
  });
}

void add_eval(CLI::App& app) {
  auto* sub = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string model, data, out;
    uint64_t seed = 0;
    double scale = 1.0;
    int subset = 20, mult_audios = 1, k = 32;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--model", a->model, "trained checkpoint")->required();
  sub->add_option("--data", a->data, "dataset directory")->required();
  sub->add_option("--out", a->out, "write machine-readable key=value report here");
  sub->add_option("--seed", a->seed, "evaluation seed");
  sub->add_option("--scale", a->scale, "guidance scale s");
  sub->add_option("--subset-size", a->subset, "multimodality subset size");
  sub->add_option("--mult-audios", a->mult_audios, "audios averaged for multimodality");
  sub->add_option("--k", a->k, "frames averaged for identity");
  sub->callback([a] {
    const Checkpoint ckpt = load_checkpoint(a->model);
    const SyntheticDataset ds = load_dataset(a->data);
    EvalOptions opts;
    opts.guidance_scale = a->scale;
    opts.seed = a->seed;
    opts.subset_size = a->subset;
    opts.mult_audios = a->mult_audios;
    opts.identity_frames_k = a->k;
    const EvalReport report = evaluate_model(ckpt, ds, opts);
    std::cout << format_report(report);
    if (!a->out.empty()) {
      std::ofstream out(a->out, std::ios::trunc);
      require(out.good(), "cannot write report: " + a->out);
      out << format_report_kv(report);
    }
  });
}

void add_decompose(CLI::App& app) {
  auto* sub = app.add_subcommand("decompose", "split a mesh sequence into identity/motion/pose");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string mesh, pose, lip_mask, out;
    std::vector<double> pivot;
    int k = 32;
    uint64_t seed = 0;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--mesh", a->mesh, "mesh sequence (DF3D)")->required();
  sub->add_option("--pose", a->pose, "ground-truth pose track (3-channel DF3A)")->required();
  sub->add_option("--lip-mask", a->lip_mask, "lip mask (DF3M)")->required();
  sub->add_option("--out", a->out, "output representation file")->required();
  sub->add_option("--pivot", a->pivot, "rotation pivot x y z (default: mesh centroid)")
      ->expected(3);
  sub->add_option("--k", a->k, "frames averaged for identity");
  sub->add_option("--seed", a->seed, "identity sampling seed");
  sub->callback([a] {
    const FaceMeshSequence mesh = read_mesh(a->mesh);
    const PoseRepr pose = pose_from_file(a->pose);
    const RigSpec rig = rig_from_flags(read_mask(a->lip_mask), a->pivot, &mesh);
    const FaceRepresentation repr =
        decompose(mesh, pose, rig, std::min(a->k, mesh.n_frames), a->seed);
    write_representation(repr, mesh.fps, a->out);
    std::cout << "decomposed " << mesh.n_frames << " frames\n";
  });
}

void add_render(CLI::App& app) {
  auto* sub = app.add_subcommand("render", "render a representation back to a mesh sequence");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string repr, out;
    std::vector<double> pivot;
    int fps = 30;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--repr", a->repr, "representation file")->required();
  sub->add_option("--out", a->out, "output mesh (DF3D)")->required();
  sub->add_option("--pivot", a->pivot, "rotation pivot x y z (default: identity centroid)")
      ->expected(3);
  sub->add_option("--fps", a->fps, "mesh frame rate");
  sub->callback([a] {
    const FaceRepresentation repr = read_representation(a->repr);
    std::array<double, 3> pivot{0.0, 0.0, 0.0};
    if (a->pivot.size() == 3) {
      pivot = {a->pivot[0], a->pivot[1], a->pivot[2]};
    } else {
      const int v = repr.n_vertices();
      for (int i = 0; i < v; ++i) {
        for (int k = 0; k < 3; ++k) pivot[k] += repr.identity.vertices[3 * i + k];
      }
      for (double& c : pivot) c /= v;
    }
    // rig masks do not influence rendering; a minimal valid mask suffices
    std::vector<uint8_t> mask(repr.n_vertices(), 0);
    mask[0] = 1;
    const RigSpec rig = RigSpec::from_lip_mask(pivot, mask);
    write_mesh(render(repr, rig, a->fps), a->out);
    std::cout << "rendered " << repr.n_frames() << " frames\n";
  });
}

void add_export_obj(CLI::App& app) {
  auto* sub = app.add_subcommand("export-obj", "write one Wavefront OBJ per frame");
  sub->add_option("--config", "flat key=value config file (flags override it)")->expected(1);
  struct Args {
    std::string mesh, topology, out;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--mesh", a->mesh, "mesh sequence (DF3D)")->required();
  sub->add_option("--topology", a->topology, "triangle list (DF3T)")->required();
  sub->add_option("--out", a->out, "output directory")->required();
  sub->callback([a] {
    const FaceMeshSequence mesh = read_mesh(a->mesh);
    const auto tris = read_topology(a->topology);
    const auto paths = export_obj(mesh, tris, a->out);
    std::cout << "wrote " << paths.size() << " OBJ files to " << a->out << "\n";
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"speech-driven 3D face mesh diffusion toolkit"};
  app.require_subcommand(1);
  add_make_synthetic(app);
  add_train_sync(app);
  add_train(app);
  add_sample(app);
  add_eval(app);
  add_decompose(app);
  add_render(app);
  add_export_obj(app);

  try {
    std::vector<std::string> tokens = expand_config_tokens(argc, argv);
    std::vector<const char*> args;
    args.push_back(argc > 0 ? argv[0] : "facediff");
    for (const auto& t : tokens) args.push_back(t.c_str());
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace facediff
