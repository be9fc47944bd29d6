#include "facediff/types.hpp"

#include <cmath>

#include "facediff/common.hpp"

namespace facediff {

void FaceMeshSequence::validate() const {
  require(n_frames >= 1, "FaceMeshSequence: need at least one frame");
  require(n_vertices >= 4, "FaceMeshSequence: need at least four vertices");
  require(fps > 0, "FaceMeshSequence: fps must be positive");
  require(vertices.size() == static_cast<size_t>(n_frames) * n_vertices * 3,
          "FaceMeshSequence: vertex buffer size mismatch");
  require(all_finite(vertices), "FaceMeshSequence: non-finite coordinate");
}

RigSpec RigSpec::from_lip_mask(std::array<double, 3> pivot, std::vector<uint8_t> lip) {
  RigSpec rig;
  rig.pivot = pivot;
  rig.lip_mask = std::move(lip);
  rig.nonlip_mask.resize(rig.lip_mask.size());
  for (size_t i = 0; i < rig.lip_mask.size(); ++i) rig.nonlip_mask[i] = rig.lip_mask[i] ? 0 : 1;
  rig.validate();
  return rig;
}

int RigSpec::lip_count() const {
  int c = 0;
  for (uint8_t b : lip_mask) c += b ? 1 : 0;
  return c;
}

std::vector<int> RigSpec::lip_vertex_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n_vertices(); ++i) {
    if (lip_mask[i]) idx.push_back(i);
  }
  return idx;
}

void RigSpec::validate() const {
  require(!lip_mask.empty(), "RigSpec: empty lip mask");
  require(lip_mask.size() == nonlip_mask.size(), "RigSpec: mask length mismatch");
  int lips = 0;
  for (size_t i = 0; i < lip_mask.size(); ++i) {
    require(lip_mask[i] <= 1 && nonlip_mask[i] <= 1, "RigSpec: mask entries must be 0/1");
    require(lip_mask[i] + nonlip_mask[i] == 1, "RigSpec: nonlip_mask must complement lip_mask");
    lips += lip_mask[i];
  }
  require(lips >= 1, "RigSpec: lip mask selects no vertex");
  require(lips < static_cast<int>(lip_mask.size()), "RigSpec: lip mask selects every vertex");
  for (double p : pivot) require(std::isfinite(p), "RigSpec: non-finite pivot");
}

void PoseRepr::validate() const {
  require(rotations.size() == static_cast<size_t>(n_frames) * 3, "PoseRepr: size mismatch");
  require(all_finite(rotations), "PoseRepr: non-finite rotation");
  for (int i = 0; i < n_frames; ++i) {
    const double* r = rotation(i);
    const double mag = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    require(mag < std::numbers::pi, "PoseRepr: rotation magnitude must be < pi");
  }
}

Mat FaceRepresentation::flatten() const {
  const int n = n_frames();
  const int cols = 3 * n_vertices() + 3;
  Mat m(n + 1, cols);
  for (int j = 0; j < 3 * n_vertices(); ++j) m.at(0, j) = identity.vertices[j];
  // pad entries m(0, cols-3..cols-1) stay exactly zero
  for (int i = 0; i < n; ++i) {
    const double* mo = motion.frame(i);
    for (int j = 0; j < 3 * n_vertices(); ++j) m.at(i + 1, j) = mo[j];
    const double* po = pose.rotation(i);
    for (int j = 0; j < 3; ++j) m.at(i + 1, 3 * n_vertices() + j) = po[j];
  }
  return m;
}

FaceRepresentation FaceRepresentation::unflatten(const Mat& m, int n_vertices) {
  require(n_vertices >= 1, "unflatten: bad vertex count");
  require(m.cols == 3 * n_vertices + 3, "unflatten: column count does not match V");
  require(m.rows >= 2, "unflatten: need identity row plus at least one frame");
  const int n = m.rows - 1;
  FaceRepresentation r;
  r.identity.vertices.assign(m.row(0), m.row(0) + 3 * n_vertices);
  r.motion.n_frames = n;
  r.motion.n_vertices = n_vertices;
  r.motion.offsets.resize(static_cast<size_t>(n) * 3 * n_vertices);
  r.pose.n_frames = n;
  r.pose.rotations.resize(static_cast<size_t>(n) * 3);
  for (int i = 0; i < n; ++i) {
    const double* row = m.row(i + 1);
    std::copy(row, row + 3 * n_vertices, r.motion.frame(i));
    std::copy(row + 3 * n_vertices, row + 3 * n_vertices + 3, r.pose.rotation(i));
  }
  return r;
}

void FaceRepresentation::validate() const {
  require(identity.n_vertices() == motion.n_vertices,
          "FaceRepresentation: identity/motion vertex count mismatch");
  require(motion.n_frames == pose.n_frames,
          "FaceRepresentation: motion/pose frame count mismatch");
  require(all_finite(identity.vertices) && all_finite(motion.offsets),
          "FaceRepresentation: non-finite entries");
  pose.validate();
}

}  // namespace facediff
