#include <doctest.h>

#include <cmath>

#include "facediff/mesh_repr.hpp"
#include "facediff/rng.hpp"
#include "facediff/synthetic.hpp"

using namespace facediff;

namespace {

RigSpec test_rig(int v, std::array<double, 3> pivot = {0, 0, 0}) {
  std::vector<uint8_t> lip(v, 0);
  lip[0] = 1;
  return RigSpec::from_lip_mask(pivot, lip);
}

std::vector<double> random_frame(Prng& rng, int v) {
  std::vector<double> f(static_cast<size_t>(v) * 3);
  for (double& x : f) x = 50.0 * rng.normal();
  return f;
}

FaceMeshSequence random_sequence(Prng& rng, int n, int v) {
  FaceMeshSequence seq(n, v, 30);
  for (double& x : seq.vertices) x = 40.0 * rng.normal();
  return seq;
}

}  // namespace

TEST_CASE("apply_pose: zero rotation is the identity") {
  Prng rng(1);
  const auto frame = random_frame(rng, 6);
  const double r[3] = {0, 0, 0};
  CHECK(apply_pose(frame, r, test_rig(6)) == frame);
}

TEST_CASE("apply_pose: quarter turn about z") {
  std::vector<double> frame = {1, 0, 0, 0, 0, 0, 0, 2, 0, 1, 1, 1};
  const double r[3] = {0, 0, std::numbers::pi / 2};
  const auto out = apply_pose(frame, r, test_rig(4));
  CHECK(out[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(out[2] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("apply_pose: rotation then inverse recovers the frame") {
  Prng rng(2);
  const auto rig = test_rig(8, {3.0, -1.0, 2.0});
  for (int trial = 0; trial < 20; ++trial) {
    const auto frame = random_frame(rng, 8);
    double r[3];
    for (double& x : r) x = 1.2 * (rng.uniform() - 0.5);
    const double inv[3] = {-r[0], -r[1], -r[2]};
    const auto back = apply_pose(apply_pose(frame, r, rig), inv, rig);
    for (size_t i = 0; i < frame.size(); ++i) {
      CHECK(back[i] == doctest::Approx(frame[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("apply_pose preserves pairwise distances") {
  Prng rng(3);
  const auto rig = test_rig(10, {-5.0, 2.0, 7.0});
  const auto frame = random_frame(rng, 10);
  double r[3] = {0.4, -1.0, 0.7};
  const auto out = apply_pose(frame, r, rig);
  for (int i = 0; i < 10; ++i) {
    for (int j = i + 1; j < 10; ++j) {
      double da = 0, db = 0;
      for (int k = 0; k < 3; ++k) {
        da += (frame[3 * i + k] - frame[3 * j + k]) * (frame[3 * i + k] - frame[3 * j + k]);
        db += (out[3 * i + k] - out[3 * j + k]) * (out[3 * i + k] - out[3 * j + k]);
      }
      CHECK(std::sqrt(db) == doctest::Approx(std::sqrt(da)).epsilon(1e-9));
    }
  }
}

TEST_CASE("apply_pose rejects out-of-range and non-finite input") {
  const auto rig = test_rig(4);
  std::vector<double> frame(12, 1.0);
  const double big[3] = {std::numbers::pi, 0, 0};
  CHECK_THROWS_AS(apply_pose(frame, big, rig), InvalidInputError);
  frame[5] = std::numeric_limits<double>::quiet_NaN();
  const double ok[3] = {0.1, 0, 0};
  CHECK_THROWS_AS(apply_pose(frame, ok, rig), InvalidInputError);
}

TEST_CASE("to_zero_pose: zero pose leaves a sequence unchanged") {
  Prng rng(4);
  const auto seq = random_sequence(rng, 5, 6);
  PoseRepr pose;
  pose.n_frames = 5;
  pose.rotations.assign(15, 0.0);
  const auto out = to_zero_pose(seq, pose, test_rig(6));
  CHECK(out.vertices == seq.vertices);
}

TEST_CASE("to_zero_pose recovers the base mesh from forward-rotated frames") {
  Prng rng(5);
  const auto rig = test_rig(7, {1.0, 2.0, 3.0});
  const auto base = random_frame(rng, 7);
  const int n = 6;
  FaceMeshSequence seq(n, 7, 30);
  PoseRepr pose;
  pose.n_frames = n;
  pose.rotations.resize(3 * n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pose.rotation(i)[k] = 0.8 * (rng.uniform() - 0.5);
    const auto rotated = apply_pose(base, pose.rotation(i), rig);
    std::copy(rotated.begin(), rotated.end(), seq.frame(i));
  }
  const auto zp = to_zero_pose(seq, pose, rig);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 21; ++j) {
      CHECK(zp.frame(i)[j] == doctest::Approx(base[j]).epsilon(1e-9));
    }
  }
  // round trip the other way
  for (int i = 0; i < n; ++i) {
    std::vector<double> f(zp.frame(i), zp.frame(i) + 21);
    const auto fwd = apply_pose(f, pose.rotation(i), rig);
    for (int j = 0; j < 21; ++j) {
      CHECK(fwd[j] == doctest::Approx(seq.frame(i)[j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("to_zero_pose rejects frame-count mismatch") {
  Prng rng(6);
  const auto seq = random_sequence(rng, 4, 5);
  PoseRepr pose;
  pose.n_frames = 3;
  pose.rotations.assign(9, 0.0);
  CHECK_THROWS_AS(to_zero_pose(seq, pose, test_rig(5)), InvalidInputError);
}

TEST_CASE("extract_identity: constant sequence and full-sample mean") {
  Prng rng(7);
  const auto m = random_frame(rng, 5);
  FaceMeshSequence constant(4, 5, 30);
  for (int i = 0; i < 4; ++i) std::copy(m.begin(), m.end(), constant.frame(i));
  for (int k = 1; k <= 4; ++k) {
    const auto id = extract_identity(constant, k, 99);
    CHECK(id.vertices == m);
  }

  const auto seq = random_sequence(rng, 6, 5);
  const auto id = extract_identity(seq, 6, 1);
  for (int j = 0; j < 15; ++j) {
    double mean = 0.0;
    for (int i = 0; i < 6; ++i) mean += seq.frame(i)[j];
    mean /= 6;
    CHECK(id.vertices[j] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("extract_identity: two-frame mean and determinism") {
  Prng rng(8);
  FaceMeshSequence seq(2, 4, 30);
  const auto a = random_frame(rng, 4);
  const auto b = random_frame(rng, 4);
  std::copy(a.begin(), a.end(), seq.frame(0));
  std::copy(b.begin(), b.end(), seq.frame(1));
  const auto id = extract_identity(seq, 2, 5);
  for (int j = 0; j < 12; ++j) {
    CHECK(id.vertices[j] == doctest::Approx((a[j] + b[j]) / 2).epsilon(1e-12));
  }
  const auto again = extract_identity(seq, 2, 5);
  CHECK(id.vertices == again.vertices);
  CHECK_THROWS_AS(extract_identity(seq, 3, 0), InvalidInputError);
  CHECK_THROWS_AS(extract_identity(seq, 0, 0), InvalidInputError);
}

TEST_CASE("decompose: static zero-pose sequence") {
  Prng rng(9);
  const auto m = random_frame(rng, 6);
  const int n = 5;
  FaceMeshSequence seq(n, 6, 30);
  for (int i = 0; i < n; ++i) std::copy(m.begin(), m.end(), seq.frame(i));
  PoseRepr pose;
  pose.n_frames = n;
  pose.rotations.assign(3 * n, 0.0);
  const auto repr = decompose(seq, pose, test_rig(6), n, 0);
  CHECK(repr.identity.vertices == m);
  for (double x : repr.motion.offsets) CHECK(x == 0.0);
  CHECK(repr.pose.rotations == pose.rotations);
}

TEST_CASE("decompose: hand-constructed offsets mean-center with k = N") {
  Prng rng(10);
  const auto m = random_frame(rng, 4);
  const int n = 3;
  FaceMeshSequence seq(n, 4, 30);
  std::vector<std::vector<double>> delta(n);
  for (int i = 0; i < n; ++i) {
    delta[i] = random_frame(rng, 4);
    for (int j = 0; j < 12; ++j) seq.frame(i)[j] = m[j] + delta[i][j];
  }
  PoseRepr pose;
  pose.n_frames = n;
  pose.rotations.assign(9, 0.0);
  const auto repr = decompose(seq, pose, test_rig(4), n, 0);
  for (int j = 0; j < 12; ++j) {
    double mean_d = (delta[0][j] + delta[1][j] + delta[2][j]) / 3;
    CHECK(repr.identity.vertices[j] == doctest::Approx(m[j] + mean_d).epsilon(1e-12));
    for (int i = 0; i < n; ++i) {
      CHECK(repr.motion.frame(i)[j] == doctest::Approx(delta[i][j] - mean_d).epsilon(1e-10));
    }
  }
  // motion averaged over all frames is zero when k = N
  for (int j = 0; j < 12; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += repr.motion.frame(i)[j];
    CHECK(s / n == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("render/decompose round trip on generated sequences") {
  SyntheticConfig cfg;
  cfg.num_subjects = 2;
  cfg.utterances_per_subject = 2;
  cfg.seed = 77;
  const SyntheticDataset ds = generate_synthetic(cfg);
  for (const auto& utt : ds.utterances) {
    const auto repr = decompose(utt.mesh, utt.pose, ds.rig, 10, 3);
    const auto back = render(repr, ds.rig, utt.mesh.fps);
    double max_err = 0.0;
    for (size_t i = 0; i < back.vertices.size(); ++i) {
      max_err = std::max(max_err, std::abs(back.vertices[i] - utt.mesh.vertices[i]));
    }
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("render: motion and pose all zero reproduces the identity") {
  Prng rng(11);
  FaceRepresentation repr;
  repr.identity.vertices = random_frame(rng, 5);
  repr.motion.n_frames = 4;
  repr.motion.n_vertices = 5;
  repr.motion.offsets.assign(4 * 15, 0.0);
  repr.pose.n_frames = 4;
  repr.pose.rotations.assign(12, 0.0);
  const auto seq = render(repr, test_rig(5), 30);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 15; ++j) CHECK(seq.frame(i)[j] == repr.identity.vertices[j]);
  }
}

TEST_CASE("render: additive case with zero pose") {
  Prng rng(12);
  FaceRepresentation repr;
  repr.identity.vertices = random_frame(rng, 4);
  repr.motion.n_frames = 2;
  repr.motion.n_vertices = 4;
  repr.motion.offsets = random_frame(rng, 4);
  const auto second = random_frame(rng, 4);
  repr.motion.offsets.insert(repr.motion.offsets.end(), second.begin(), second.end());
  repr.pose.n_frames = 2;
  repr.pose.rotations.assign(6, 0.0);
  const auto seq = render(repr, test_rig(4), 30);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 12; ++j) {
      CHECK(seq.frame(i)[j] == repr.identity.vertices[j] + repr.motion.frame(i)[j]);
    }
  }
}

TEST_CASE("flatten/unflatten is a bijection with zero pad") {
  Prng rng(13);
  FaceRepresentation repr;
  const int v = 5, n = 4;
  repr.identity.vertices = random_frame(rng, v);
  repr.motion.n_frames = n;
  repr.motion.n_vertices = v;
  repr.motion.offsets.resize(static_cast<size_t>(n) * 3 * v);
  for (double& x : repr.motion.offsets) x = rng.normal();
  repr.pose.n_frames = n;
  repr.pose.rotations.resize(3 * n);
  for (double& x : repr.pose.rotations) x = 0.5 * rng.uniform();

  const Mat flat = repr.flatten();
  CHECK(flat.rows == n + 1);
  CHECK(flat.cols == 3 * v + 3);
  CHECK(flat.at(0, 3 * v) == 0.0);
  CHECK(flat.at(0, 3 * v + 1) == 0.0);
  CHECK(flat.at(0, 3 * v + 2) == 0.0);

  const auto back = FaceRepresentation::unflatten(flat, v);
  CHECK(back.identity.vertices == repr.identity.vertices);
  CHECK(back.motion.offsets == repr.motion.offsets);
  CHECK(back.pose.rotations == repr.pose.rotations);
  CHECK(back.flatten().a == flat.a);
}

TEST_CASE("rig validation") {
  std::vector<uint8_t> all_lip(4, 1);
  CHECK_THROWS_AS(RigSpec::from_lip_mask({0, 0, 0}, all_lip), InvalidInputError);
  std::vector<uint8_t> none(4, 0);
  CHECK_THROWS_AS(RigSpec::from_lip_mask({0, 0, 0}, none), InvalidInputError);
}
