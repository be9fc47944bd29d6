#include <doctest.h>

#include <cmath>

#include "facediff/sampler.hpp"
#include "test_util.hpp"

using namespace facediff;
using testutil::random_mat;

namespace {

struct Setup {
  DenoiserConfig cfg;
  DenoiserParams params;
  DiffusionSchedule schedule;
  ReprScaler scaler;
  Mat audio;
  int n = 6;
};

Setup make_setup(uint64_t seed) {
  Setup s;
  s.cfg.latent_dim = 8;
  s.cfg.num_layers = 1;
  s.cfg.num_heads = 1;
  s.cfg.n_vertices = 5;
  s.cfg.max_frames = 12;
  s.cfg.audio_dim = 3;
  s.cfg.diffusion_steps = 6;
  s.params = init_params(s.cfg, seed);
  s.schedule = make_schedule(ScheduleKind::Cosine, s.cfg.diffusion_steps);
  s.scaler.identity_mean.assign(3 * s.cfg.n_vertices, 0.0);
  Prng rng(seed ^ 0xA0);
  s.audio = random_mat(rng, s.n, s.cfg.audio_dim);
  return s;
}

IdentityRepr make_identity(Prng& rng, int v) {
  IdentityRepr id;
  id.vertices.resize(3 * v);
  for (double& x : id.vertices) x = 30.0 * rng.normal();
  return id;
}

PoseRepr make_pose(Prng& rng, int n) {
  PoseRepr pose;
  pose.n_frames = n;
  pose.rotations.resize(3 * n);
  for (double& x : pose.rotations) x = 0.3 * (rng.uniform() - 0.5);
  return pose;
}

MotionRepr make_motion(Prng& rng, int n, int v) {
  MotionRepr m;
  m.n_frames = n;
  m.n_vertices = v;
  m.offsets.resize(static_cast<size_t>(n) * 3 * v);
  for (double& x : m.offsets) x = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("sample is deterministic per seed and varies across seeds") {
  const auto s = make_setup(1);
  ReferenceSet refs;
  const auto a = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 42, 0.1);
  const auto b = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 42, 0.1);
  CHECK(a.identity.vertices == b.identity.vertices);
  CHECK(a.motion.offsets == b.motion.offsets);
  CHECK(a.pose.rotations == b.pose.rotations);

  const auto c = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 43, 0.1);
  CHECK(a.identity.vertices != c.identity.vertices);
  CHECK(a.motion.offsets != c.motion.offsets);
  CHECK(a.pose.rotations != c.pose.rotations);
}

TEST_CASE("referenced identity and pose are bitwise exact; motion stays free") {
  const auto s = make_setup(2);
  Prng rng(7);
  ReferenceSet refs;
  refs.identity = make_identity(rng, s.cfg.n_vertices);
  refs.pose = make_pose(rng, s.n);
  const auto a = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 5, 0.1);
  const auto b = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 6, 0.1);
  CHECK(a.identity.vertices == refs.identity->vertices);
  CHECK(b.identity.vertices == refs.identity->vertices);
  CHECK(a.pose.rotations == refs.pose->rotations);
  CHECK(b.pose.rotations == refs.pose->rotations);
  CHECK(a.motion.offsets != b.motion.offsets);
}

TEST_CASE("all three references pin the output regardless of audio") {
  const auto s = make_setup(3);
  Prng rng(9);
  ReferenceSet refs;
  refs.identity = make_identity(rng, s.cfg.n_vertices);
  refs.pose = make_pose(rng, s.n);
  refs.motion = make_motion(rng, s.n, s.cfg.n_vertices);
  const auto a = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 5, 0.1);
  Prng rng2(77);
  const Mat other_audio = random_mat(rng2, s.n, s.cfg.audio_dim);
  const auto b = sample(other_audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 9, 0.1);
  CHECK(a.identity.vertices == refs.identity->vertices);
  CHECK(a.motion.offsets == refs.motion->offsets);
  CHECK(a.pose.rotations == refs.pose->rotations);
  CHECK(b.identity.vertices == refs.identity->vertices);
  CHECK(b.motion.offsets == refs.motion->offsets);
  CHECK(b.pose.rotations == refs.pose->rotations);
}

TEST_CASE("guidance with s != 1 requires masked-conditioning training") {
  const auto s = make_setup(4);
  ReferenceSet refs;
  CHECK_THROWS_AS(sample(s.audio, refs, 2.0, s.cfg, s.params, s.schedule, s.scaler, 1, 0.0),
                  InvalidInputError);
  // s = 1 on a non-masked model is allowed
  CHECK_NOTHROW(sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 1, 0.0));
}

TEST_CASE("sample_batch matches elementwise sample and is order independent") {
  const auto s = make_setup(5);
  ReferenceSet refs;
  const std::vector<uint64_t> seeds = {11, 22, 33};
  const auto batch = sample_batch(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler,
                                  seeds, 0.1);
  REQUIRE(batch.size() == 3);
  const auto single = sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 22, 0.1);
  CHECK(batch[1].motion.offsets == single.motion.offsets);

  const auto again = sample_batch(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler,
                                  seeds, 0.1);
  for (int i = 0; i < 3; ++i) CHECK(batch[i].motion.offsets == again[i].motion.offsets);

  const std::vector<uint64_t> reversed = {33, 22, 11};
  const auto rev = sample_batch(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler,
                                reversed, 0.1);
  CHECK(rev[2].motion.offsets == batch[0].motion.offsets);
  CHECK(rev[0].motion.offsets == batch[2].motion.offsets);
}

TEST_CASE("reference shape mismatches are rejected") {
  const auto s = make_setup(6);
  Prng rng(13);
  ReferenceSet refs;
  refs.identity = make_identity(rng, s.cfg.n_vertices + 1);
  CHECK_THROWS_AS(sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 1, 0.1),
                  InvalidInputError);
  refs.identity.reset();
  refs.pose = make_pose(rng, s.n + 2);
  CHECK_THROWS_AS(sample(s.audio, refs, 1.0, s.cfg, s.params, s.schedule, s.scaler, 1, 0.1),
                  InvalidInputError);
}

TEST_CASE("ablated models require their fixed component as reference") {
  auto s = make_setup(7);
  s.cfg.diffuse_identity = false;
  const auto params = init_params(s.cfg, 3);
  ReferenceSet refs;
  CHECK_THROWS_AS(sample(s.audio, refs, 1.0, s.cfg, params, s.schedule, s.scaler, 1, 0.1),
                  InvalidInputError);
  Prng rng(15);
  refs.identity = make_identity(rng, s.cfg.n_vertices);
  CHECK_NOTHROW(sample(s.audio, refs, 1.0, s.cfg, params, s.schedule, s.scaler, 1, 0.1));
}
