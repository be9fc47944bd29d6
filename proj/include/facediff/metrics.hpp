#pragma once

#include <string>
#include <utility>
#include <vector>

#include "facediff/types.hpp"

namespace facediff {

// Per frame: max L2 distance over lip vertices between prediction and ground
// truth (zero-pose space). Returns (mean over frames, max over frames), mm.
std::pair<double, double> lip_vertex_error(const FaceMeshSequence& pred,
                                           const FaceMeshSequence& gt, const RigSpec& rig);

// Non-lip dynamics deviation: per non-lip vertex, the population standard
// deviation over frames of the vertex position norm; returns the mean
// absolute difference of that dynamic between ground truth and prediction.
double nldd(const FaceMeshSequence& pred, const FaceMeshSequence& gt, const RigSpec& rig);

struct MultReport {
  double identity = 0.0;
  double motion = 0.0;
  double pose = 0.0;
  double mesh = 0.0;
};

// Mean L2 distance between paired generations of two equally sized subsets,
// per component, normalized by the component element count. mesh renders
// both representations through the rig.
MultReport multimodality(const std::vector<FaceRepresentation>& subset_a,
                         const std::vector<FaceRepresentation>& subset_b, const RigSpec& rig,
                         int fps = 30);

struct EvalReport {
  double avg_lve = 0.0;  // frame-weighted mean of per-frame max lip distance
  double max_lve = 0.0;  // max over all frames of all sequences
  double nldd = 0.0;     // mean over sequences
  MultReport mult;
  int sequences = 0;
  int mult_subset_size = 0;
  std::string config_echo;
};

std::string format_report(const EvalReport& r);     // human-readable table
std::string format_report_kv(const EvalReport& r);  // machine key=value lines

}  // namespace facediff
