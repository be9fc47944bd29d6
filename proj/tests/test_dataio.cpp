#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "facediff/dataio.hpp"
#include "facediff/mesh_repr.hpp"
#include "facediff/synthetic.hpp"
#include "test_util.hpp"

using namespace facediff;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("facediff_test_" + name)).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FaceMeshSequence random_mesh(Prng& rng, int n, int v) {
  FaceMeshSequence seq(n, v, 30);
  for (double& x : seq.vertices) x = 25.0 * rng.normal();
  return seq;
}

}  // namespace

TEST_CASE("mesh file round trip is value-exact and byte-identical") {
  Prng rng(1);
  const auto seq = random_mesh(rng, 4, 6);
  const auto p1 = tmp_path("mesh_a.df3d");
  const auto p2 = tmp_path("mesh_b.df3d");
  write_mesh(seq, p1);
  const auto back = read_mesh(p1);
  CHECK(back.n_frames == seq.n_frames);
  CHECK(back.n_vertices == seq.n_vertices);
  CHECK(back.fps == seq.fps);
  for (size_t i = 0; i < seq.vertices.size(); ++i) {
    CHECK(back.vertices[i] == static_cast<double>(static_cast<float>(seq.vertices[i])));
  }
  write_mesh(back, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("audio, mask, and topology round trips") {
  Prng rng(2);
  AudioFeatureSequence audio;
  audio.n_frames = 7;
  audio.feature_dim = 3;
  audio.feature_rate = 50;
  audio.features.resize(21);
  for (double& x : audio.features) x = rng.normal();
  const auto pa = tmp_path("audio.df3a");
  write_audio(audio, pa);
  const auto audio2 = read_audio(pa);
  CHECK(audio2.n_frames == 7);
  CHECK(audio2.feature_rate == 50);
  const auto pa2 = tmp_path("audio2.df3a");
  write_audio(audio2, pa2);
  CHECK(slurp(pa) == slurp(pa2));

  const std::vector<uint8_t> mask = {1, 0, 0, 1, 1, 0};
  const auto pm = tmp_path("mask.df3m");
  write_mask(mask, pm);
  CHECK(read_mask(pm) == mask);

  const std::vector<uint32_t> tris = {0, 1, 2, 2, 3, 0};
  const auto pt = tmp_path("topo.df3t");
  write_topology(tris, pt);
  CHECK(read_topology(pt) == tris);
}

TEST_CASE("corrupted headers raise the designated error kinds") {
  Prng rng(3);
  const auto seq = random_mesh(rng, 2, 5);
  const auto path = tmp_path("corrupt.df3d");
  write_mesh(seq, path);
  const auto good = slurp(path);

  // bad magic
  auto bad = good;
  bad[0] = 'X';
  spit(path, bad);
  CHECK_THROWS_AS(read_mesh(path), BadMagicError);

  // unsupported version
  bad = good;
  bad[4] = 9;
  spit(path, bad);
  CHECK_THROWS_AS(read_mesh(path), UnsupportedVersionError);

  // truncated payload
  bad = good;
  bad.resize(bad.size() - 7);
  spit(path, bad);
  CHECK_THROWS_AS(read_mesh(path), TruncatedPayloadError);

  // dimension overflow
  bad = good;
  bad[8] = static_cast<char>(0xff);  // N low byte
  bad[9] = static_cast<char>(0xff);
  bad[10] = static_cast<char>(0xff);
  bad[11] = static_cast<char>(0x7f);
  spit(path, bad);
  CHECK_THROWS_AS(read_mesh(path), DimensionOverflowError);

  // zero dimension
  bad = good;
  bad[8] = 0;
  bad[9] = 0;
  bad[10] = 0;
  bad[11] = 0;
  spit(path, bad);
  CHECK_THROWS_AS(read_mesh(path), DimensionOverflowError);

  // trailing garbage
  bad = good;
  bad.push_back(0);
  spit(path, bad);
  CHECK_THROWS_AS(read_mesh(path), FormatError);

  // same kinds for the audio container
  AudioFeatureSequence audio;
  audio.n_frames = 2;
  audio.feature_dim = 2;
  audio.feature_rate = 10;
  audio.features = {1, 2, 3, 4};
  const auto pa = tmp_path("corrupt.df3a");
  write_audio(audio, pa);
  auto abytes = slurp(pa);
  abytes[1] = 'Z';
  spit(pa, abytes);
  CHECK_THROWS_AS(read_audio(pa), BadMagicError);
}

TEST_CASE("checkpoint save -> load -> save is byte-identical") {
  DenoiserConfig cfg;
  cfg.latent_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.n_vertices = 6;
  cfg.max_frames = 10;
  cfg.audio_dim = 4;
  cfg.diffusion_steps = 12;

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_params(cfg, 99);
  ckpt.schedule = make_schedule(ScheduleKind::Cosine, cfg.diffusion_steps);
  ckpt.train_steps = 1234;
  ckpt.trained_mask_prob = 0.1;
  std::vector<uint8_t> lip(6, 0);
  lip[0] = lip[1] = 1;
  ckpt.rig = RigSpec::from_lip_mask({1.5, -2.5, 3.5}, lip);
  ckpt.scaler.identity_mean.assign(18, 0.25);
  ckpt.scaler.identity_scale = 2.0;
  ckpt.scaler.motion_scale = 0.5;
  ckpt.scaler.pose_scale = 0.1;
  SyncExpertConfig ecfg;
  ecfg.segment_len = 3;
  ecfg.lip_vertex_count = 2;
  ecfg.audio_dim = 4;
  ecfg.hidden_dim = 8;
  ecfg.embed_dim = 4;
  ckpt.has_expert = true;
  ckpt.expert = init_sync_params(ecfg, 7);

  const auto p1 = tmp_path("ckpt_a.df3c");
  const auto p2 = tmp_path("ckpt_b.df3c");
  save_checkpoint(ckpt, p1);
  const Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  CHECK(loaded.config == cfg);
  CHECK(loaded.train_steps == 1234);
  CHECK(loaded.trained_mask_prob == 0.1);
  CHECK(loaded.rig.pivot == ckpt.rig.pivot);
  CHECK(loaded.rig.lip_mask == ckpt.rig.lip_mask);
  CHECK(loaded.schedule.alpha_bars == ckpt.schedule.alpha_bars);
  CHECK(loaded.has_expert);
  CHECK(loaded.expert.config == ecfg);
  const auto la = enumerate_tensors(ckpt.params);
  auto mut = loaded;
  const auto lb = enumerate_tensors(mut.params);
  for (size_t i = 0; i < la.size(); ++i) CHECK(la[i].second->a == lb[i].second->a);
}

TEST_CASE("export_obj writes v/f records that parse back") {
  FaceMeshSequence seq(3, 4, 30);
  Prng rng(5);
  for (double& x : seq.vertices) x = 10.0 * rng.normal();
  const std::vector<uint32_t> tri = {0, 1, 2};
  const auto dir = tmp_path("objs");
  fs::remove_all(dir);
  const auto paths = export_obj(seq, tri, dir);
  REQUIRE(paths.size() == 3);
  CHECK(paths[0].find("frame_000000.obj") != std::string::npos);

  std::ifstream in(paths[1]);
  std::string tag;
  int v_lines = 0, f_lines = 0;
  std::vector<double> coords;
  while (in >> tag) {
    if (tag == "v") {
      double x, y, z;
      in >> x >> y >> z;
      coords.insert(coords.end(), {x, y, z});
      ++v_lines;
    } else if (tag == "f") {
      int a, b, c;
      in >> a >> b >> c;
      CHECK(a == 1);
      CHECK(b == 2);
      CHECK(c == 3);
      ++f_lines;
    }
  }
  CHECK(v_lines == 4);
  CHECK(f_lines == 1);
  for (int j = 0; j < 12; ++j) {
    CHECK(coords[j] == doctest::Approx(seq.frame(1)[j]).epsilon(5e-6));
  }

  const std::vector<uint32_t> bad = {0, 1, 9};
  CHECK_THROWS_AS(export_obj(seq, bad, dir), InvalidInputError);
}

TEST_CASE("representation files round trip") {
  Prng rng(6);
  FaceRepresentation repr;
  repr.identity.vertices.resize(12);
  for (double& x : repr.identity.vertices) x = rng.normal();
  repr.motion.n_frames = 3;
  repr.motion.n_vertices = 4;
  repr.motion.offsets.resize(36);
  for (double& x : repr.motion.offsets) x = rng.normal();
  repr.pose.n_frames = 3;
  repr.pose.rotations.resize(9);
  for (double& x : repr.pose.rotations) x = 0.2 * rng.uniform();

  const auto path = tmp_path("repr.df3a");
  write_representation(repr, 30, path);
  const auto back = read_representation(path);
  CHECK(back.n_frames() == 3);
  CHECK(back.n_vertices() == 4);
  for (size_t i = 0; i < repr.motion.offsets.size(); ++i) {
    CHECK(back.motion.offsets[i] ==
          static_cast<double>(static_cast<float>(repr.motion.offsets[i])));
  }
}

TEST_CASE("synthetic dataset: deterministic, correlated, bounded") {
  SyntheticConfig cfg;
  cfg.num_subjects = 2;
  cfg.utterances_per_subject = 2;
  cfg.seed = 31;
  const auto d1 = generate_synthetic(cfg);
  const auto d2 = generate_synthetic(cfg);

  const auto dir1 = tmp_path("ds1");
  const auto dir2 = tmp_path("ds2");
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  write_synthetic(d1, dir1);
  write_synthetic(d2, dir2);
  for (const auto& entry : fs::recursive_directory_iterator(dir1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir1);
    CHECK(slurp(entry.path().string()) == slurp((fs::path(dir2) / rel).string()));
  }

  // pose magnitudes bounded below pi
  for (const auto& utt : d1.utterances) {
    for (int i = 0; i < utt.pose.n_frames; ++i) {
      const double* r = utt.pose.rotation(i);
      CHECK(std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) < std::numbers::pi);
    }
  }

  // driving channel correlates with mean lip opening (loaded from disk)
  const auto loaded = load_dataset(dir1);
  CHECK(loaded.utterances.size() == d1.utterances.size());
  for (const auto& utt : loaded.utterances) {
    const auto repr = decompose(utt.mesh, utt.pose, loaded.rig, utt.mesh.n_frames, 0);
    std::vector<double> opening(utt.mesh.n_frames), driver(utt.mesh.n_frames);
    for (int i = 0; i < utt.mesh.n_frames; ++i) {
      driver[i] = utt.audio.frame(i)[0];
      double o = 0.0;
      for (int j = 0; j < kLipVertexCount; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / kLipVertexCount;
        const double sign = std::sin(phi) >= 0.0 ? 1.0 : -1.0;
        o += sign * repr.motion.frame(i)[3 * j + 1];
      }
      opening[i] = o;
    }
    double mo = 0, md = 0;
    for (int i = 0; i < utt.mesh.n_frames; ++i) {
      mo += opening[i];
      md += driver[i];
    }
    mo /= utt.mesh.n_frames;
    md /= utt.mesh.n_frames;
    double num = 0, da = 0, db = 0;
    for (int i = 0; i < utt.mesh.n_frames; ++i) {
      num += (opening[i] - mo) * (driver[i] - md);
      da += (opening[i] - mo) * (opening[i] - mo);
      db += (driver[i] - md) * (driver[i] - md);
    }
    CHECK(num / std::sqrt(da * db) > 0.99);
  }
}
