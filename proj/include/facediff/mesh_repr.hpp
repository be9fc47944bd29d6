#pragma once

#include <array>
#include <cstdint>

#include "facediff/types.hpp"

namespace facediff {

// 3x3 rotation matrix for an axis-angle vector (Rodrigues), |r| < pi.
std::array<double, 9> rodrigues_matrix(const double* rotation);

// Rigid rotation of one mesh frame (3V coords) about the rig pivot:
// p -> R (p - pivot) + pivot.
std::vector<double> apply_pose(const std::vector<double>& mesh_frame, const double* rotation,
                               const RigSpec& rig);

// Un-rotate every frame so pitch/roll/yaw are zero.
FaceMeshSequence to_zero_pose(const FaceMeshSequence& seq, const PoseRepr& pose,
                              const RigSpec& rig);

// Mean of k frames sampled uniformly without replacement (seeded).
IdentityRepr extract_identity(const FaceMeshSequence& zero_pose_seq, int k, uint64_t seed);

// Full split into identity / motion / pose.
FaceRepresentation decompose(const FaceMeshSequence& seq, const PoseRepr& pose,
                             const RigSpec& rig, int k, uint64_t seed);

// Inverse of decompose: frame i = apply_pose(identity + motion_i, pose_i).
FaceMeshSequence render(const FaceRepresentation& repr, const RigSpec& rig, int fps = 30);

// Zero-pose render (identity + motion only), the space LVE/NLDD are scored in.
FaceMeshSequence render_zero_pose(const FaceRepresentation& repr, int fps = 30);

}  // namespace facediff
