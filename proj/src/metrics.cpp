#include "facediff/metrics.hpp"

#include <cmath>
#include <sstream>

#include "facediff/mesh_repr.hpp"

namespace facediff {

std::pair<double, double> lip_vertex_error(const FaceMeshSequence& pred,
                                           const FaceMeshSequence& gt, const RigSpec& rig) {
  require(pred.n_frames == gt.n_frames && pred.n_vertices == gt.n_vertices,
          "lip_vertex_error: shape mismatch");
  require(rig.n_vertices() == gt.n_vertices, "lip_vertex_error: rig mismatch");
  const auto lips = rig.lip_vertex_indices();
  double sum = 0.0, worst = 0.0;
  for (int i = 0; i < gt.n_frames; ++i) {
    const double* p = pred.frame(i);
    const double* g = gt.frame(i);
    double frame_max = 0.0;
    for (int v : lips) {
      const double dx = p[3 * v] - g[3 * v];
      const double dy = p[3 * v + 1] - g[3 * v + 1];
      const double dz = p[3 * v + 2] - g[3 * v + 2];
      frame_max = std::max(frame_max, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    sum += frame_max;
    worst = std::max(worst, frame_max);
  }
  return {sum / gt.n_frames, worst};
}

namespace {

// Population std over frames of the position norm of one vertex.
double vertex_norm_std(const FaceMeshSequence& seq, int v) {
  const int n = seq.n_frames;
  double mean = 0.0;
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) {
    const double* f = seq.frame(i) + 3 * v;
    norms[i] = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
    mean += norms[i];
  }
  mean /= n;
  double var = 0.0;
  for (double x : norms) var += (x - mean) * (x - mean);
  return std::sqrt(var / n);
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

double nldd(const FaceMeshSequence& pred, const FaceMeshSequence& gt, const RigSpec& rig) {
  require(pred.n_frames == gt.n_frames && pred.n_vertices == gt.n_vertices,
          "nldd: shape mismatch");
  require(rig.n_vertices() == gt.n_vertices, "nldd: rig mismatch");
  require(gt.n_frames >= 2, "nldd: need at least two frames");
  double sum = 0.0;
  int count = 0;
  for (int v = 0; v < gt.n_vertices; ++v) {
    if (!rig.nonlip_mask[v]) continue;
    sum += std::abs(vertex_norm_std(gt, v) - vertex_norm_std(pred, v));
    ++count;
  }
  require(count > 0, "nldd: empty non-lip mask");
  return sum / count;
}

MultReport multimodality(const std::vector<FaceRepresentation>& subset_a,
                         const std::vector<FaceRepresentation>& subset_b, const RigSpec& rig,
                         int fps) {
  require(subset_a.size() == subset_b.size(), "multimodality: subset length mismatch");
  require(!subset_a.empty(), "multimodality: empty subsets");
  const size_t s = subset_a.size();
  MultReport r;
  for (size_t i = 0; i < s; ++i) {
    const auto& a = subset_a[i];
    const auto& b = subset_b[i];
    require(a.n_vertices() == b.n_vertices() && a.n_frames() == b.n_frames(),
            "multimodality: pair shape mismatch");
    r.identity += l2(a.identity.vertices, b.identity.vertices) / a.identity.vertices.size();
    r.motion += l2(a.motion.offsets, b.motion.offsets) / a.motion.offsets.size();
    r.pose += l2(a.pose.rotations, b.pose.rotations) / a.pose.rotations.size();
    const FaceMeshSequence ma = render(a, rig, fps);
    const FaceMeshSequence mb = render(b, rig, fps);
    r.mesh += l2(ma.vertices, mb.vertices) / ma.vertices.size();
  }
  r.identity /= s;
  r.motion /= s;
  r.pose /= s;
  r.mesh /= s;
  return r;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "evaluation report\n";
  os << "  sequences          " << r.sequences << "\n";
  os << "  avg lip vertex err " << r.avg_lve << " mm\n";
  os << "  max lip vertex err " << r.max_lve << " mm\n";
  os << "  non-lip deviation  " << r.nldd << " mm\n";
  os << "  mult (subset " << r.mult_subset_size << ")\n";
  os << "    identity " << r.mult.identity << "\n";
  os << "    motion   " << r.mult.motion << "\n";
  os << "    pose     " << r.mult.pose << "\n";
  os << "    mesh     " << r.mult.mesh << "\n";
  if (!r.config_echo.empty()) os << "  config: " << r.config_echo << "\n";
  return os.str();
}

std::string format_report_kv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "sequences=" << r.sequences << "\n";
  os << "avg_lve=" << r.avg_lve << "\n";
  os << "max_lve=" << r.max_lve << "\n";
  os << "nldd=" << r.nldd << "\n";
  os << "mult_id=" << r.mult.identity << "\n";
  os << "mult_motion=" << r.mult.motion << "\n";
  os << "mult_pose=" << r.mult.pose << "\n";
  os << "mult_mesh=" << r.mult.mesh << "\n";
  os << "mult_subset_size=" << r.mult_subset_size << "\n";
  if (!r.config_echo.empty()) os << "config=" << r.config_echo << "\n";
  return os.str();
}

}  // namespace facediff
