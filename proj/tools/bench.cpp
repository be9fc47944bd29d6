// Kernel and pipeline benchmark: serial reference vs OpenMP path.
//
//   facediff_bench [--threads N]
//
// Prints a table of timings; the serial column runs the kern::ref
// implementations, the parallel column the production kernels.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <omp.h>

#include "facediff/denoiser.hpp"
#include "facediff/kernels.hpp"
#include "facediff/optim.hpp"
#include "facediff/rng.hpp"
#include "facediff/training.hpp"

using namespace facediff;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Mat random_mat(Prng& rng, int r, int c) {
  Mat m(r, c);
  for (double& x : m.a) x = rng.normal();
  return m;
}

void bench_matmul(int size, int reps) {
  Prng rng(7);
  const Mat a = random_mat(rng, size, size);
  const Mat b = random_mat(rng, size, size);
  Mat c;
  const double serial = time_ms([&] { kern::ref::matmul_nt(a, b, c); }, reps);
  const double parallel = time_ms([&] { kern::matmul_nt(a, b, c); }, reps);
  const double gflop = 2.0 * size * size * size / 1e9;
  std::printf("matmul_nt %4dx%-4d  serial %8.2f ms (%5.2f GFLOP/s)  omp %8.2f ms (%5.2f GFLOP/s)  speedup %.2fx\n",
              size, size, serial, gflop / (serial / 1e3), parallel, gflop / (parallel / 1e3),
              serial / parallel);
}

void bench_train_step(int threads) {
  DenoiserConfig cfg;
  cfg.latent_dim = 64;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.n_vertices = 40;
  cfg.audio_dim = 16;
  cfg.max_frames = 64;
  cfg.diffusion_steps = 100;

  const int n = 30;
  Prng rng(11);
  std::vector<TrainSample> data(8);
  for (auto& s : data) {
    s.x0 = random_mat(rng, n + 1, cfg.repr_cols());
    s.audio = random_mat(rng, n, cfg.audio_dim);
  }
  std::vector<uint8_t> lip(cfg.n_vertices, 0);
  for (int i = 0; i < 12; ++i) lip[i] = 1;
  const RigSpec rig = RigSpec::from_lip_mask({0, 0, 0}, lip);
  const DiffusionSchedule schedule = make_schedule(ScheduleKind::Cosine, cfg.diffusion_steps);
  LossWeights weights;
  weights.sync = 0.0;  // keep the benchmark free of expert setup
  TrainConfig tc;
  tc.batch_size = 8;
  DenoiserParams params = init_params(cfg, 1);
  Adam opt(1e-4);
  Prng step_rng(3);
  std::vector<const TrainSample*> batch;
  for (const auto& s : data) batch.push_back(&s);

  const double ms = time_ms(
      [&] {
        train_step(batch, params, opt, nullptr, schedule, weights, tc, rig, cfg, step_rng);
      },
      5);
  std::printf("train_step (C=%d, %d layers, batch %d) with %d thread(s): %8.2f ms/step\n",
              cfg.latent_dim, cfg.num_layers, tc.batch_size, threads, ms);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = omp_get_max_threads();
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--threads") == 0) threads = std::atoi(argv[i + 1]);
  }
  omp_set_num_threads(threads);
  std::printf("threads: %d\n", threads);

  bench_matmul(128, 20);
  bench_matmul(256, 10);
  bench_matmul(512, 3);

  omp_set_num_threads(1);
  bench_train_step(1);
  omp_set_num_threads(threads);
  bench_train_step(threads);
  return 0;
}
