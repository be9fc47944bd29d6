#include <doctest.h>

#include <cmath>

#include "facediff/conditioning.hpp"
#include "test_util.hpp"

using namespace facediff;
using testutil::random_mat;

namespace {

AudioFeatureSequence make_audio(int n, int z, int rate, const std::vector<double>& values) {
  AudioFeatureSequence a;
  a.n_frames = n;
  a.feature_dim = z;
  a.feature_rate = rate;
  a.features = values;
  return a;
}

DenoiserConfig small_config() {
  DenoiserConfig cfg;
  cfg.latent_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.n_vertices = 5;
  cfg.max_frames = 12;
  cfg.audio_dim = 3;
  cfg.diffusion_steps = 8;
  return cfg;
}

}  // namespace

TEST_CASE("resample_audio: equal rates and counts pass through") {
  Prng rng(1);
  std::vector<double> v(12 * 4);
  for (double& x : v) x = rng.normal();
  const auto audio = make_audio(12, 4, 30, v);
  const Mat out = resample_audio(audio, 12, 30);
  CHECK(out.a == v);
}

TEST_CASE("resample_audio: constant track stays constant at any length") {
  std::vector<double> v(5 * 2, 3.25);
  const auto audio = make_audio(5, 2, 25, v);
  for (const int n : {1, 4, 9, 33}) {
    const Mat out = resample_audio(audio, n, 30);
    CHECK(out.rows == n);
    for (double x : out.a) CHECK(x == 3.25);
  }
}

TEST_CASE("resample_audio: two samples interpolate to three frames") {
  const auto audio = make_audio(2, 1, 1, {0.0, 1.0});
  const Mat out = resample_audio(audio, 3, 2);
  CHECK(out.at(0, 0) == doctest::Approx(0.0));
  CHECK(out.at(1, 0) == doctest::Approx(0.5));
  CHECK(out.at(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("resample_audio clamps beyond the endpoints") {
  const auto audio = make_audio(2, 1, 10, {1.0, 2.0});
  const Mat out = resample_audio(audio, 10, 10);  // frames past the last sample
  CHECK(out.at(0, 0) == 1.0);
  CHECK(out.at(9, 0) == 2.0);
}

TEST_CASE("mask_audio: passthrough and null broadcast") {
  const auto cfg = small_config();
  const auto params = init_params(cfg, 5);
  Prng rng(2);
  const Mat audio = random_mat(rng, 7, cfg.audio_dim);
  const Mat same = mask_audio(audio, false, params);
  CHECK(same.a == audio.a);
  const Mat masked = mask_audio(audio, true, params);
  for (int i = 0; i < masked.rows; ++i) {
    for (int j = 0; j < masked.cols; ++j) {
      CHECK(masked.at(i, j) == params.null_audio.a[j]);
    }
  }
}

TEST_CASE("masking rate concentrates near mask_prob") {
  Prng rng(99);
  int masked = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) masked += rng.bernoulli(0.10) ? 1 : 0;
  const double frac = static_cast<double>(masked) / n;
  CHECK(frac >= 0.09);
  CHECK(frac <= 0.11);
}

TEST_CASE("guided_predict endpoints and affine structure") {
  const auto cfg = small_config();
  auto params = init_params(cfg, 9);
  for (double& x : params.w_out.a) x *= 50.0;  // make outputs non-tiny
  Prng rng(3);
  const int n = 6;
  const Mat audio = random_mat(rng, n, cfg.audio_dim);
  const Mat x_t = random_mat(rng, n + 1, cfg.repr_cols());
  const int t = 4;

  const Mat cond = denoiser_forward(t, audio, x_t, cfg, params);
  const Mat uncond = denoiser_forward(t, mask_audio(audio, true, params), x_t, cfg, params);

  const Mat s1 = guided_predict(t, audio, x_t, 1.0, cfg, params);
  const Mat s0 = guided_predict(t, audio, x_t, 0.0, cfg, params);
  for (size_t i = 0; i < s1.a.size(); ++i) {
    CHECK(std::abs(s1.a[i] - cond.a[i]) < 1e-12);
    CHECK(std::abs(s0.a[i] - uncond.a[i]) < 1e-12);
  }

  // hand-evaluated affine formula at s = 2
  const Mat s2 = guided_predict(t, audio, x_t, 2.0, cfg, params);
  for (size_t i = 0; i < s2.a.size(); ++i) {
    const double want = uncond.a[i] + 2.0 * (cond.a[i] - uncond.a[i]);
    CHECK(s2.a[i] == doctest::Approx(want).epsilon(1e-12));
  }

  // collinearity of s in {0, 1/2, 1}
  const Mat half = guided_predict(t, audio, x_t, 0.5, cfg, params);
  for (size_t i = 0; i < half.a.size(); ++i) {
    const double mid = 0.5 * (s0.a[i] + s1.a[i]);
    CHECK(std::abs(half.a[i] - mid) < 1e-9);
  }
}

TEST_CASE("resample_audio rejects bad input") {
  AudioFeatureSequence empty;
  CHECK_THROWS_AS(resample_audio(empty, 5, 30), InvalidInputError);
  const auto audio = make_audio(3, 1, 10, {1, 2, 3});
  CHECK_THROWS_AS(resample_audio(audio, 0, 30), InvalidInputError);
}
