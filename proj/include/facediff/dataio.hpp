#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facediff/conditioning.hpp"
#include "facediff/denoiser.hpp"
#include "facediff/sync_expert.hpp"
#include "facediff/training.hpp"
#include "facediff/types.hpp"

namespace facediff {

// Little-endian binary containers:
//   DF3D mesh     magic "DF3D", u32 version, u32 N, u32 V, u32 fps, N*V*3 f32
//   DF3A audio    magic "DF3A", u32 version, u32 N_a, u32 Z_a, u32 rate, N_a*Z_a f32
//   DF3M mask     magic "DF3M", u32 version, u32 V, V bytes in {0,1}
//   DF3T topology magic "DF3T", u32 version, u32 F, F*3 u32 indices
// Readers validate magic, version, dimensions, and payload length, raising
// BadMagicError / UnsupportedVersionError / DimensionOverflowError /
// TruncatedPayloadError respectively.

void write_mesh(const FaceMeshSequence& seq, const std::string& path);
FaceMeshSequence read_mesh(const std::string& path);

void write_audio(const AudioFeatureSequence& audio, const std::string& path);
AudioFeatureSequence read_audio(const std::string& path);

void write_mask(const std::vector<uint8_t>& mask, const std::string& path);
std::vector<uint8_t> read_mask(const std::string& path);

void write_topology(const std::vector<uint32_t>& triangles, const std::string& path);
std::vector<uint32_t> read_topology(const std::string& path);

// Everything needed to resume or sample: model config and weights, the frozen
// sync expert, the schedule, rig masks, the representation scaler, and the
// training step counter. Round-trips byte-identically.
struct Checkpoint {
  uint32_t version = 1;
  DenoiserConfig config;
  DenoiserParams params;
  bool has_expert = false;
  bool expert_frozen = true;
  SyncExpertParams expert;
  DiffusionSchedule schedule;
  uint64_t train_steps = 0;
  RigSpec rig;
  ReprScaler scaler;
  double trained_mask_prob = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// One Wavefront OBJ per frame (v/f records only), frame_000000.obj style.
// Returns the written paths.
std::vector<std::string> export_obj(const FaceMeshSequence& seq,
                                    const std::vector<uint32_t>& triangles,
                                    const std::string& out_dir);

// Flattened representations travel in DF3A containers: (N+1) rows of (3V+3)
// channels at the mesh frame rate.
void write_representation(const FaceRepresentation& repr, int fps, const std::string& path);
FaceRepresentation read_representation(const std::string& path);

}  // namespace facediff
