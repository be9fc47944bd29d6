#include "facediff/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "facediff/dataio.hpp"
#include "facediff/mesh_repr.hpp"
#include "facediff/rng.hpp"

namespace facediff {

void SyntheticConfig::validate() const {
  require(num_subjects >= 1 && utterances_per_subject >= 1, "SyntheticConfig: counts positive");
  require(n_frames >= 2, "SyntheticConfig: need at least two frames");
  require(n_vertices >= 24, "SyntheticConfig: V >= 24 for disjoint lip/eye/skull groups");
  require(audio_dim >= 1 && fps >= 1, "SyntheticConfig: audio_dim/fps positive");
  require(jaw_amplitude_mm > 0 && eyelid_amplitude_mm >= 0, "SyntheticConfig: amplitudes");
  require(pose_amplitude_rad >= 0 && pose_amplitude_rad * std::sqrt(3.0) < std::numbers::pi,
          "SyntheticConfig: pose amplitude must keep |rotation| < pi");
}

uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index) {
  Prng rng(seed ^ (tag * 0x9E3779B97F4A7C15ull) ^ (index + 1));
  return rng.next_u64();
}

namespace {

// Peak-normalized sum of a few random sinusoids.
std::vector<double> smooth_track(Prng& rng, int n, int fps) {
  std::vector<double> t(n, 0.0);
  for (int k = 0; k < 4; ++k) {
    const double f = 0.5 + 3.0 * rng.uniform();
    const double ph = 2.0 * std::numbers::pi * rng.uniform();
    const double a = 0.5 + 0.5 * rng.uniform();
    for (int i = 0; i < n; ++i) {
      t[i] += a * std::sin(2.0 * std::numbers::pi * f * (static_cast<double>(i) / fps) + ph);
    }
  }
  double peak = 0.0;
  for (double x : t) peak = std::max(peak, std::abs(x));
  if (peak > 1e-9) {
    for (double& x : t) x /= peak;
  }
  return t;
}

// Smoothed Gaussian random walk scaled to a peak amplitude.
std::vector<double> bounded_walk(Prng& rng, int n, double amplitude) {
  std::vector<double> w(n, 0.0);
  for (int i = 1; i < n; ++i) w[i] = w[i - 1] + rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      int cnt = 0;
      for (int j = std::max(0, i - 2); j <= std::min(n - 1, i + 2); ++j) {
        acc += w[j];
        ++cnt;
      }
      s[i] = acc / cnt;
    }
    w = std::move(s);
  }
  double peak = 0.0;
  for (double x : w) peak = std::max(peak, std::abs(x));
  if (peak > 1e-9) {
    for (double& x : w) x *= amplitude / peak;
  }
  return w;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const int v = config.n_vertices;
  const int n = config.n_frames;

  SyntheticDataset ds;
  ds.config = config;

  std::vector<uint8_t> lip_mask(v, 0);
  for (int i = 0; i < kLipVertexCount; ++i) lip_mask[i] = 1;
  ds.rig = RigSpec::from_lip_mask({0.0, 0.0, 0.0}, lip_mask);

  // topology: lip fan, eyelid quads, skull fan (valid, low-poly)
  for (int j = 1; j + 1 < kLipVertexCount; ++j) {
    ds.topology.insert(ds.topology.end(), {0u, static_cast<uint32_t>(j),
                                           static_cast<uint32_t>(j + 1)});
  }
  ds.topology.insert(ds.topology.end(), {12u, 13u, 14u});
  ds.topology.insert(ds.topology.end(), {13u, 15u, 14u});
  for (int j = 17; j + 1 < v; ++j) {
    ds.topology.insert(ds.topology.end(), {16u, static_cast<uint32_t>(j),
                                           static_cast<uint32_t>(j + 1)});
  }

  // per-subject base heads
  std::vector<std::vector<double>> bases(config.num_subjects);
  std::vector<double> lip_sign(kLipVertexCount), lip_weight(kLipVertexCount);
  for (int j = 0; j < kLipVertexCount; ++j) {
    const double phi = 2.0 * std::numbers::pi * j / kLipVertexCount;
    lip_sign[j] = std::sin(phi) >= 0.0 ? 1.0 : -1.0;
    lip_weight[j] = 0.3 + 0.7 * std::abs(std::sin(phi));
  }

  for (int s = 0; s < config.num_subjects; ++s) {
    Prng rng(derive_seed(config.seed, 1, s));
    const double scale = 0.9 + 0.2 * rng.uniform();
    const double ox = 4.0 * (2.0 * rng.uniform() - 1.0);
    const double oy = 4.0 * (2.0 * rng.uniform() - 1.0);
    const double oz = 4.0 * (2.0 * rng.uniform() - 1.0);
    std::vector<double> base(static_cast<size_t>(v) * 3);
    auto put = [&](int idx, double x, double y, double z) {
      base[3 * idx] = x * scale + ox;
      base[3 * idx + 1] = y * scale + oy;
      base[3 * idx + 2] = z * scale + oz;
    };
    for (int j = 0; j < kLipVertexCount; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / kLipVertexCount;
      put(j, 18.0 * std::cos(phi), -35.0 + 7.0 * std::sin(phi), 62.0);
    }
    put(12, -22.0, 18.0, 58.0);
    put(13, 22.0, 18.0, 58.0);
    put(14, -22.0, 15.0, 58.0);
    put(15, 22.0, 15.0, 58.0);
    const int skull = v - 16;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int j = 0; j < skull; ++j) {
      const double y = 1.0 - 2.0 * (j + 0.5) / skull;
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double th = golden * j;
      put(16 + j, 75.0 * r * std::cos(th), 95.0 * y, 80.0 * r * std::sin(th));
    }
    bases[s] = std::move(base);
  }

  for (int s = 0; s < config.num_subjects; ++s) {
    for (int u = 0; u < config.utterances_per_subject; ++u) {
      Prng rng(derive_seed(config.seed, 2, static_cast<uint64_t>(s) * 1000 + u));

      SyntheticUtterance utt;
      utt.subject = s;

      // audio: channel 0 drives the lips; the rest are smooth distractors
      utt.audio.n_frames = n;
      utt.audio.feature_dim = config.audio_dim;
      utt.audio.feature_rate = config.fps;
      utt.audio.features.resize(static_cast<size_t>(n) * config.audio_dim);
      const std::vector<double> driver = smooth_track(rng, n, config.fps);
      for (int i = 0; i < n; ++i) utt.audio.frame(i)[0] = driver[i];
      for (int c = 1; c < config.audio_dim; ++c) {
        const double amp = 0.5 + 0.5 * rng.uniform();
        const std::vector<double> track = smooth_track(rng, n, config.fps);
        for (int i = 0; i < n; ++i) utt.audio.frame(i)[c] = amp * track[i];
      }

      const std::vector<double> eyelid = smooth_track(rng, n, config.fps);

      utt.pose.n_frames = n;
      utt.pose.rotations.resize(static_cast<size_t>(n) * 3);
      for (int axis = 0; axis < 3; ++axis) {
        const double amp = config.pose_amplitude_rad * (0.4 + 0.6 * rng.uniform());
        const std::vector<double> walk = bounded_walk(rng, n, amp);
        for (int i = 0; i < n; ++i) utt.pose.rotation(i)[axis] = walk[i];
      }

      utt.mesh = FaceMeshSequence(n, v, config.fps);
      std::vector<double> zero_pose(static_cast<size_t>(v) * 3);
      for (int i = 0; i < n; ++i) {
        zero_pose = bases[s];
        const double opening = config.jaw_amplitude_mm * driver[i];
        for (int j = 0; j < kLipVertexCount; ++j) {
          zero_pose[3 * j + 1] += lip_sign[j] * lip_weight[j] * opening;
        }
        const double blink = config.eyelid_amplitude_mm * eyelid[i];
        zero_pose[3 * 12 + 1] -= blink;
        zero_pose[3 * 13 + 1] -= blink;
        zero_pose[3 * 14 + 1] -= 0.8 * blink;
        zero_pose[3 * 15 + 1] -= 0.8 * blink;

        const std::vector<double> posed = apply_pose(zero_pose, utt.pose.rotation(i), ds.rig);
        std::copy(posed.begin(), posed.end(), utt.mesh.frame(i));
      }
      ds.utterances.push_back(std::move(utt));
    }
  }
  return ds;
}

namespace {

std::string subject_dir(int s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subject_%02d", s);
  return buf;
}

std::string utt_stem(int u) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt_%02d", u);
  return buf;
}

std::map<std::string, std::string> parse_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw FormatError("cannot open manifest: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void write_synthetic(const SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream m(dir + "/manifest.txt", std::ios::trunc);
    if (!m.good()) throw FormatError("cannot write manifest in " + dir);
    char buf[64];
    m << "format_version=1\n";
    m << "num_subjects=" << ds.config.num_subjects << "\n";
    m << "utterances_per_subject=" << ds.config.utterances_per_subject << "\n";
    m << "n_frames=" << ds.config.n_frames << "\n";
    m << "n_vertices=" << ds.config.n_vertices << "\n";
    m << "audio_dim=" << ds.config.audio_dim << "\n";
    m << "fps=" << ds.config.fps << "\n";
    m << "seed=" << ds.config.seed << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", ds.config.jaw_amplitude_mm);
    m << "jaw_amplitude_mm=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", ds.config.eyelid_amplitude_mm);
    m << "eyelid_amplitude_mm=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", ds.config.pose_amplitude_rad);
    m << "pose_amplitude_rad=" << buf << "\n";
    for (int k = 0; k < 3; ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.rig.pivot[k]);
      m << "pivot_" << "xyz"[k] << "=" << buf << "\n";
    }
    m.flush();
    if (!m.good()) throw FormatError("manifest write failed in " + dir);
  }

  write_mask(ds.rig.lip_mask, dir + "/lip_mask.df3m");
  write_topology(ds.topology, dir + "/topology.df3t");

  for (const auto& utt : ds.utterances) {
    int index = 0;
    // index within subject: count previous utterances of the same subject
    for (const auto& other : ds.utterances) {
      if (&other == &utt) break;
      if (other.subject == utt.subject) ++index;
    }
    const std::string sdir = dir + "/" + subject_dir(utt.subject);
    fs::create_directories(sdir);
    const std::string stem = sdir + "/" + utt_stem(index);
    write_mesh(utt.mesh, stem + ".mesh.df3d");
    write_audio(utt.audio, stem + ".audio.df3a");
    AudioFeatureSequence pose_carrier;
    pose_carrier.n_frames = utt.pose.n_frames;
    pose_carrier.feature_dim = 3;
    pose_carrier.feature_rate = ds.config.fps;
    pose_carrier.features = utt.pose.rotations;
    write_audio(pose_carrier, stem + ".pose.df3a");
  }
}

SyntheticDataset load_dataset(const std::string& dir) {
  const auto kv = parse_kv(dir + "/manifest.txt");
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest missing key: " + key);
    return it->second;
  };

  SyntheticDataset ds;
  ds.config.num_subjects = std::stoi(get("num_subjects"));
  ds.config.utterances_per_subject = std::stoi(get("utterances_per_subject"));
  ds.config.n_frames = std::stoi(get("n_frames"));
  ds.config.n_vertices = std::stoi(get("n_vertices"));
  ds.config.audio_dim = std::stoi(get("audio_dim"));
  ds.config.fps = std::stoi(get("fps"));
  ds.config.seed = std::stoull(get("seed"));
  ds.config.jaw_amplitude_mm = std::stod(get("jaw_amplitude_mm"));
  ds.config.eyelid_amplitude_mm = std::stod(get("eyelid_amplitude_mm"));
  ds.config.pose_amplitude_rad = std::stod(get("pose_amplitude_rad"));

  std::array<double, 3> pivot{std::stod(get("pivot_x")), std::stod(get("pivot_y")),
                              std::stod(get("pivot_z"))};
  ds.rig = RigSpec::from_lip_mask(pivot, read_mask(dir + "/lip_mask.df3m"));
  ds.topology = read_topology(dir + "/topology.df3t");

  for (int s = 0; s < ds.config.num_subjects; ++s) {
    for (int u = 0; u < ds.config.utterances_per_subject; ++u) {
      const std::string stem = dir + "/" + subject_dir(s) + "/" + utt_stem(u);
      SyntheticUtterance utt;
      utt.subject = s;
      utt.mesh = read_mesh(stem + ".mesh.df3d");
      utt.audio = read_audio(stem + ".audio.df3a");
      const AudioFeatureSequence pose_carrier = read_audio(stem + ".pose.df3a");
      require(pose_carrier.feature_dim == 3, "load_dataset: pose file must have 3 channels");
      utt.pose.n_frames = pose_carrier.n_frames;
      utt.pose.rotations = pose_carrier.features;
      ds.utterances.push_back(std::move(utt));
    }
  }
  return ds;
}

}  // namespace facediff
