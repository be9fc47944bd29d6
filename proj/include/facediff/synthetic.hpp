#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facediff/conditioning.hpp"
#include "facediff/types.hpp"

namespace facediff {

// Procedural stand-in for captured data. Vertex groups: 12 lip vertices, then
// 4 eyelid vertices, then V-16 skull vertices. Audio channel 0 drives the lip
// opening through a fixed linear map; eyelid motion is smooth, random, and
// independent of audio; pose is a smooth bounded random walk.
struct SyntheticConfig {
  int num_subjects = 8;
  int utterances_per_subject = 4;
  int n_frames = 30;
  int n_vertices = 40;  // >= 24 so lip/eye/skull groups stay disjoint
  int audio_dim = 16;
  int fps = 30;
  uint64_t seed = 0;
  double jaw_amplitude_mm = 6.0;
  double eyelid_amplitude_mm = 1.0;
  double pose_amplitude_rad = 0.25;
  void validate() const;
};

struct SyntheticUtterance {
  int subject = 0;
  FaceMeshSequence mesh;
  AudioFeatureSequence audio;
  PoseRepr pose;  // ground truth, consumed by decompose
};

struct SyntheticDataset {
  SyntheticConfig config;
  RigSpec rig;
  std::vector<uint32_t> topology;
  std::vector<SyntheticUtterance> utterances;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

// On-disk layout: manifest.txt, lip_mask.df3m, topology.df3t, and
// subject_XX/utt_XX.{mesh.df3d,audio.df3a,pose.df3a}.
void write_synthetic(const SyntheticDataset& dataset, const std::string& dir);
SyntheticDataset load_dataset(const std::string& dir);

// Seed derivation for independent per-item streams.
uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index);

constexpr int kLipVertexCount = 12;
constexpr int kEyelidVertexCount = 4;

}  // namespace facediff
