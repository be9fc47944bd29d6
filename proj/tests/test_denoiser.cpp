#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "facediff/training.hpp"
#include "test_util.hpp"

using namespace facediff;
using testutil::FlatParams;
using testutil::random_mat;

namespace {

DenoiserConfig micro_config() {
  DenoiserConfig cfg;
  cfg.latent_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 1;
  cfg.n_vertices = 6;
  cfg.max_frames = 16;
  cfg.audio_dim = 4;
  cfg.diffusion_steps = 10;
  return cfg;
}

}  // namespace

TEST_CASE("forward shape contract") {
  DenoiserConfig cfg;
  cfg.latent_dim = 32;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.n_vertices = 40;
  cfg.max_frames = 64;
  cfg.audio_dim = 16;
  const auto params = init_params(cfg, 0);
  Prng rng(1);
  const Mat audio = random_mat(rng, 30, 16);
  const Mat x_t = random_mat(rng, 31, cfg.repr_cols());
  const Mat out = denoiser_forward(5, audio, x_t, cfg, params);
  CHECK(out.rows == 31);
  CHECK(out.cols == 123);
  CHECK(all_finite(out.a));
}

TEST_CASE("forward is deterministic") {
  const auto cfg = micro_config();
  const auto params = init_params(cfg, 3);
  Prng rng(2);
  const Mat audio = random_mat(rng, 7, cfg.audio_dim);
  const Mat x_t = random_mat(rng, 8, cfg.repr_cols());
  const Mat a = denoiser_forward(4, audio, x_t, cfg, params);
  const Mat b = denoiser_forward(4, audio, x_t, cfg, params);
  CHECK(a.a == b.a);
}

TEST_CASE("init_params: seeded, distinct across seeds, near-zero output head") {
  const auto cfg = micro_config();
  auto p1 = init_params(cfg, 7);
  auto p2 = init_params(cfg, 7);
  auto p3 = init_params(cfg, 8);
  const auto l1 = enumerate_tensors(p1);
  const auto l2 = enumerate_tensors(p2);
  const auto l3 = enumerate_tensors(p3);
  bool any_diff = false;
  for (size_t i = 0; i < l1.size(); ++i) {
    CHECK(l1[i].second->a == l2[i].second->a);
    if (l1[i].second->a != l3[i].second->a) any_diff = true;
  }
  CHECK(any_diff);

  // unit-scale inputs produce small outputs from the near-zero output head
  Prng rng(4);
  const Mat audio = random_mat(rng, 6, cfg.audio_dim);
  const Mat x_t = random_mat(rng, 7, cfg.repr_cols());
  const Mat out = denoiser_forward(2, audio, x_t, cfg, p1);
  double max_out = 0.0, max_in = 0.0;
  for (double v : out.a) max_out = std::max(max_out, std::abs(v));
  for (double v : x_t.a) max_in = std::max(max_in, std::abs(v));
  CHECK(max_out < 0.1 * max_in);
}

TEST_CASE("positional encoding makes audio order matter") {
  const auto cfg = micro_config();
  auto params = init_params(cfg, 11);
  // generic weights; the output head init is near zero, so amplify it
  for (double& x : params.w_out.a) x *= 100.0;
  Prng rng(5);
  const Mat audio = random_mat(rng, 6, cfg.audio_dim);
  const Mat x_t = random_mat(rng, 7, cfg.repr_cols());
  Mat permuted = audio;
  std::copy(audio.row(5), audio.row(5) + cfg.audio_dim, permuted.row(0));
  std::copy(audio.row(0), audio.row(0) + cfg.audio_dim, permuted.row(5));
  const Mat a = denoiser_forward(3, audio, x_t, cfg, params);
  const Mat b = denoiser_forward(3, permuted, x_t, cfg, params);
  double diff = 0.0;
  for (size_t i = 0; i < a.a.size(); ++i) diff = std::max(diff, std::abs(a.a[i] - b.a[i]));
  CHECK(diff > 1e-9);
}

TEST_CASE("micro-model face-loss gradient matches finite differences") {
  const auto cfg = micro_config();
  auto params = init_params(cfg, 21);
  // make every path generically active
  Prng prng(22);
  for (auto& [name, m] : enumerate_tensors(params)) {
    for (double& x : m->a) x += 0.05 * prng.normal();
  }

  Prng rng(6);
  const int n = 5;
  const Mat audio = random_mat(rng, n, cfg.audio_dim);
  const Mat x_t = random_mat(rng, n + 1, cfg.repr_cols());
  const Mat x0 = random_mat(rng, n + 1, cfg.repr_cols());
  const int t = 3;

  auto loss = [&] {
    const Mat out = denoiser_forward(t, audio, x_t, cfg, params);
    return face_loss(x0, out);
  };

  // analytic gradient
  CacheHandle cache;
  const Mat out = denoiser_forward(t, audio, x_t, cfg, params, cache.get());
  Mat d_out(out.rows, out.cols);
  const size_t count = static_cast<size_t>(out.rows) * out.cols - 3;
  for (int i = 0; i < out.rows; ++i) {
    const int jmax = (i == 0) ? out.cols - 3 : out.cols;
    for (int j = 0; j < jmax; ++j) {
      d_out.at(i, j) = 2.0 * (out.at(i, j) - x0.at(i, j)) / count;
    }
  }
  DenoiserParams grads = make_params(cfg);
  denoiser_backward(d_out, *cache.get(), cfg, params, grads);

  FlatParams flat(params);
  FlatParams flat_g(grads);
  Prng pick(7);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const size_t coord = static_cast<size_t>(pick.uniform() * flat.total);
    const double analytic = flat_g.at(coord);
    const double fd = testutil::central_difference(flat, coord, loss, 1e-5);
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-7});
    CHECK(std::abs(analytic - fd) / denom < 1e-3);
    ++checked;
  }
  CHECK(checked >= 50);
}

TEST_CASE("forward validates shapes and step range") {
  const auto cfg = micro_config();
  const auto params = init_params(cfg, 0);
  Prng rng(8);
  const Mat audio = random_mat(rng, 5, cfg.audio_dim);
  const Mat x_t = random_mat(rng, 6, cfg.repr_cols());
  CHECK_THROWS_AS(denoiser_forward(0, audio, x_t, cfg, params), InvalidInputError);
  CHECK_THROWS_AS(denoiser_forward(11, audio, x_t, cfg, params), InvalidInputError);
  const Mat bad_audio = random_mat(rng, 5, cfg.audio_dim + 1);
  CHECK_THROWS_AS(denoiser_forward(1, bad_audio, x_t, cfg, params), InvalidInputError);
  const Mat bad_rows = random_mat(rng, 7, cfg.repr_cols());
  CHECK_THROWS_AS(denoiser_forward(1, audio, bad_rows, cfg, params), InvalidInputError);
}
