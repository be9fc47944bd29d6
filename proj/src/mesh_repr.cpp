#include "facediff/mesh_repr.hpp"

#include <algorithm>
#include <cmath>

#include "facediff/common.hpp"
#include "facediff/rng.hpp"

namespace facediff {

std::array<double, 9> rodrigues_matrix(const double* rotation) {
  const double x = rotation[0], y = rotation[1], z = rotation[2];
  require(std::isfinite(x) && std::isfinite(y) && std::isfinite(z),
          "rodrigues_matrix: non-finite rotation");
  const double theta = std::sqrt(x * x + y * y + z * z);
  require(theta < std::numbers::pi, "rodrigues_matrix: rotation magnitude must be < pi");
  if (theta == 0.0) {
    return {1, 0, 0, 0, 1, 0, 0, 0, 1};
  }
  const double kx = x / theta, ky = y / theta, kz = z / theta;
  const double c = std::cos(theta), s = std::sin(theta), v = 1.0 - c;
  return {
      c + kx * kx * v,      kx * ky * v - kz * s, kx * kz * v + ky * s,
      ky * kx * v + kz * s, c + ky * ky * v,      ky * kz * v - kx * s,
      kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v,
  };
}

namespace {

void apply_pose_inplace(const double* src, double* dst, int n_vertices, const double* rotation,
                        const RigSpec& rig) {
  const auto R = rodrigues_matrix(rotation);
  const double px = rig.pivot[0], py = rig.pivot[1], pz = rig.pivot[2];
  for (int v = 0; v < n_vertices; ++v) {
    const double dx = src[3 * v] - px;
    const double dy = src[3 * v + 1] - py;
    const double dz = src[3 * v + 2] - pz;
    dst[3 * v] = R[0] * dx + R[1] * dy + R[2] * dz + px;
    dst[3 * v + 1] = R[3] * dx + R[4] * dy + R[5] * dz + py;
    dst[3 * v + 2] = R[6] * dx + R[7] * dy + R[8] * dz + pz;
  }
}

}  // namespace

std::vector<double> apply_pose(const std::vector<double>& mesh_frame, const double* rotation,
                               const RigSpec& rig) {
  require(mesh_frame.size() % 3 == 0, "apply_pose: frame size must be a multiple of 3");
  require(all_finite(mesh_frame), "apply_pose: non-finite vertex");
  const int n_vertices = static_cast<int>(mesh_frame.size()) / 3;
  std::vector<double> out(mesh_frame.size());
  apply_pose_inplace(mesh_frame.data(), out.data(), n_vertices, rotation, rig);
  return out;
}

FaceMeshSequence to_zero_pose(const FaceMeshSequence& seq, const PoseRepr& pose,
                              const RigSpec& rig) {
  seq.validate();
  pose.validate();
  require(pose.n_frames == seq.n_frames, "to_zero_pose: frame count mismatch");
  FaceMeshSequence out(seq.n_frames, seq.n_vertices, seq.fps);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < seq.n_frames; ++i) {
    const double* r = pose.rotation(i);
    const double inv[3] = {-r[0], -r[1], -r[2]};
    apply_pose_inplace(seq.frame(i), out.frame(i), seq.n_vertices, inv, rig);
  }
  return out;
}

IdentityRepr extract_identity(const FaceMeshSequence& zero_pose_seq, int k, uint64_t seed) {
  zero_pose_seq.validate();
  require(k >= 1 && k <= zero_pose_seq.n_frames, "extract_identity: k out of range");
  // Partial Fisher-Yates over frame indices.
  std::vector<int> indices(zero_pose_seq.n_frames);
  for (int i = 0; i < zero_pose_seq.n_frames; ++i) indices[i] = i;
  Prng rng(seed);
  for (int i = 0; i < k; ++i) {
    const int j = rng.uniform_int(i, zero_pose_seq.n_frames - 1);
    std::swap(indices[i], indices[j]);
  }
  // Mean accumulated as deviations from the first sampled frame, so a
  // constant sequence reproduces its frame exactly.
  IdentityRepr id;
  const double* ref = zero_pose_seq.frame(indices[0]);
  id.vertices.assign(ref, ref + zero_pose_seq.frame_coords());
  std::vector<double> acc(zero_pose_seq.frame_coords(), 0.0);
  for (int i = 1; i < k; ++i) {
    const double* f = zero_pose_seq.frame(indices[i]);
    for (int j = 0; j < zero_pose_seq.frame_coords(); ++j) acc[j] += f[j] - ref[j];
  }
  for (int j = 0; j < zero_pose_seq.frame_coords(); ++j) id.vertices[j] += acc[j] / k;
  return id;
}

FaceRepresentation decompose(const FaceMeshSequence& seq, const PoseRepr& pose,
                             const RigSpec& rig, int k, uint64_t seed) {
  require(rig.n_vertices() == seq.n_vertices, "decompose: rig/mesh vertex count mismatch");
  const FaceMeshSequence zp = to_zero_pose(seq, pose, rig);
  FaceRepresentation repr;
  repr.identity = extract_identity(zp, k, seed);
  repr.motion.n_frames = seq.n_frames;
  repr.motion.n_vertices = seq.n_vertices;
  repr.motion.offsets.resize(static_cast<size_t>(seq.n_frames) * seq.frame_coords());
  for (int i = 0; i < seq.n_frames; ++i) {
    const double* f = zp.frame(i);
    double* m = repr.motion.frame(i);
    for (int j = 0; j < seq.frame_coords(); ++j) m[j] = f[j] - repr.identity.vertices[j];
  }
  repr.pose = pose;
  return repr;
}

FaceMeshSequence render(const FaceRepresentation& repr, const RigSpec& rig, int fps) {
  repr.validate();
  require(rig.n_vertices() == repr.n_vertices(), "render: rig/repr vertex count mismatch");
  const int n = repr.n_frames();
  const int coords = repr.n_vertices() * 3;
  FaceMeshSequence out(n, repr.n_vertices(), fps);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    std::vector<double> zp(coords);
    const double* m = repr.motion.frame(i);
    for (int j = 0; j < coords; ++j) zp[j] = repr.identity.vertices[j] + m[j];
    apply_pose_inplace(zp.data(), out.frame(i), repr.n_vertices(), repr.pose.rotation(i), rig);
  }
  return out;
}

FaceMeshSequence render_zero_pose(const FaceRepresentation& repr, int fps) {
  repr.validate();
  const int n = repr.n_frames();
  const int coords = repr.n_vertices() * 3;
  FaceMeshSequence out(n, repr.n_vertices(), fps);
  for (int i = 0; i < n; ++i) {
    const double* m = repr.motion.frame(i);
    double* f = out.frame(i);
    for (int j = 0; j < coords; ++j) f[j] = repr.identity.vertices[j] + m[j];
  }
  return out;
}

}  // namespace facediff
