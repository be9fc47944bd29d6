#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "facediff/kernels.hpp"

namespace facediff {

// N frames x V vertices x 3 coordinates, millimeters, frame-major.
struct FaceMeshSequence {
  int n_frames = 0;
  int n_vertices = 0;
  int fps = 30;
  std::vector<double> vertices;  // n_frames * n_vertices * 3

  FaceMeshSequence() = default;
  FaceMeshSequence(int n, int v, int fps_) : n_frames(n), n_vertices(v), fps(fps_) {
    vertices.assign(static_cast<size_t>(n) * v * 3, 0.0);
  }

  double* frame(int i) { return vertices.data() + static_cast<size_t>(i) * n_vertices * 3; }
  const double* frame(int i) const {
    return vertices.data() + static_cast<size_t>(i) * n_vertices * 3;
  }
  int frame_coords() const { return n_vertices * 3; }

  void validate() const;
};

// Single rigid head joint: pivot of rotation plus the lip/non-lip split.
struct RigSpec {
  std::array<double, 3> pivot{0.0, 0.0, 0.0};
  std::vector<uint8_t> lip_mask;     // length V, 1 = lip vertex
  std::vector<uint8_t> nonlip_mask;  // exact complement

  static RigSpec from_lip_mask(std::array<double, 3> pivot, std::vector<uint8_t> lip);

  int n_vertices() const { return static_cast<int>(lip_mask.size()); }
  int lip_count() const;
  std::vector<int> lip_vertex_indices() const;
  void validate() const;
};

// Neutral zero-pose face, flattened to 3V.
struct IdentityRepr {
  std::vector<double> vertices;
  int n_vertices() const { return static_cast<int>(vertices.size()) / 3; }
};

// Per-frame global head rotation, axis-angle, |r| < pi.
struct PoseRepr {
  int n_frames = 0;
  std::vector<double> rotations;  // n_frames * 3

  const double* rotation(int i) const { return rotations.data() + 3 * static_cast<size_t>(i); }
  double* rotation(int i) { return rotations.data() + 3 * static_cast<size_t>(i); }
  void validate() const;
};

// Per-frame vertex deviation from the identity in zero-pose space.
struct MotionRepr {
  int n_frames = 0;
  int n_vertices = 0;
  std::vector<double> offsets;  // n_frames * 3V

  const double* frame(int i) const {
    return offsets.data() + static_cast<size_t>(i) * n_vertices * 3;
  }
  double* frame(int i) { return offsets.data() + static_cast<size_t>(i) * n_vertices * 3; }
};

// Joint diffusion state. Flattened layout is (N+1) x (3V+3):
// row 0 is the identity padded with three trailing zeros, row i >= 1 is
// [motion_i | pose_i].
struct FaceRepresentation {
  IdentityRepr identity;
  MotionRepr motion;
  PoseRepr pose;

  int n_frames() const { return motion.n_frames; }
  int n_vertices() const { return motion.n_vertices; }

  Mat flatten() const;
  static FaceRepresentation unflatten(const Mat& m, int n_vertices);
  void validate() const;
};

}  // namespace facediff
