#include "facediff/dataio.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace facediff {

namespace {

constexpr uint32_t kFormatVersion = 1;
// caps element counts so corrupt headers cannot drive giant allocations
constexpr uint64_t kMaxElements = 1ull << 28;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_.good()) throw FormatError("cannot open for writing: " + path);
    path_ = path;
  }
  void magic(const char m[4]) { out_.write(m, 4); }
  void u32(uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out_.write(b, 4);
  }
  void u64(uint64_t v) {
    u32(static_cast<uint32_t>(v & 0xffffffffu));
    u32(static_cast<uint32_t>(v >> 32));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void byte(uint8_t v) { out_.put(static_cast<char>(v)); }
  void close() {
    out_.flush();
    if (!out_.good()) throw FormatError("write failed: " + path_);
    out_.close();
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_.good()) throw FormatError("cannot open for reading: " + path);
  }
  void expect_magic(const char m[4]) {
    char b[4] = {};
    in_.read(b, 4);
    if (in_.gcount() != 4) throw TruncatedPayloadError(path_ + ": file shorter than magic");
    if (std::memcmp(b, m, 4) != 0) {
      throw BadMagicError(path_ + ": bad magic, expected " + std::string(m, 4));
    }
  }
  uint32_t u32() {
    unsigned char b[4] = {};
    in_.read(reinterpret_cast<char*>(b), 4);
    if (in_.gcount() != 4) throw TruncatedPayloadError(path_ + ": truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    const uint64_t lo = u32();
    const uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  uint8_t byte() {
    char c = 0;
    in_.read(&c, 1);
    if (in_.gcount() != 1) throw TruncatedPayloadError(path_ + ": truncated payload");
    return static_cast<uint8_t>(c);
  }
  void expect_version(uint32_t got) {
    if (got != kFormatVersion) {
      throw UnsupportedVersionError(path_ + ": unsupported version " + std::to_string(got));
    }
  }
  std::vector<float> f32_block(uint64_t count) {
    std::vector<float> out(count);
    std::vector<unsigned char> raw(count * 4);
    in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in_.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw TruncatedPayloadError(path_ + ": payload shorter than header promises");
    }
    for (uint64_t i = 0; i < count; ++i) {
      const uint32_t u = static_cast<uint32_t>(raw[4 * i]) |
                         (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                         (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                         (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
      out[i] = std::bit_cast<float>(u);
    }
    return out;
  }
  void expect_eof() {
    in_.peek();
    if (!in_.eof()) throw FormatError(path_ + ": trailing bytes after payload");
  }

 private:
  std::ifstream in_;
  std::string path_;
};

uint64_t checked_elements(uint64_t a, uint64_t b, uint64_t c, const std::string& path) {
  if (a == 0 || b == 0 || c == 0) {
    throw DimensionOverflowError(path + ": zero dimension in header");
  }
  if (a > kMaxElements || b > kMaxElements || c > kMaxElements ||
      a * b / a != b || (a * b) * c / (a * b) != c || a * b * c > kMaxElements) {
    throw DimensionOverflowError(path + ": dimensions exceed supported size");
  }
  return a * b * c;
}

void write_f32_block(Writer& w, const std::vector<double>& values) {
  for (double v : values) w.f32(static_cast<float>(v));
}

}  // namespace

void write_mesh(const FaceMeshSequence& seq, const std::string& path) {
  seq.validate();
  Writer w(path);
  w.magic("DF3D");
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(seq.n_frames));
  w.u32(static_cast<uint32_t>(seq.n_vertices));
  w.u32(static_cast<uint32_t>(seq.fps));
  write_f32_block(w, seq.vertices);
  w.close();
}

FaceMeshSequence read_mesh(const std::string& path) {
  Reader r(path);
  r.expect_magic("DF3D");
  r.expect_version(r.u32());
  const uint32_t n = r.u32();
  const uint32_t v = r.u32();
  const uint32_t fps = r.u32();
  const uint64_t count = checked_elements(n, v, 3, path);
  if (fps == 0) throw DimensionOverflowError(path + ": zero fps");
  const auto block = r.f32_block(count);
  r.expect_eof();
  FaceMeshSequence seq(static_cast<int>(n), static_cast<int>(v), static_cast<int>(fps));
  for (uint64_t i = 0; i < count; ++i) seq.vertices[i] = block[i];
  return seq;
}

void write_audio(const AudioFeatureSequence& audio, const std::string& path) {
  audio.validate();
  Writer w(path);
  w.magic("DF3A");
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(audio.n_frames));
  w.u32(static_cast<uint32_t>(audio.feature_dim));
  w.u32(static_cast<uint32_t>(audio.feature_rate));
  write_f32_block(w, audio.features);
  w.close();
}

AudioFeatureSequence read_audio(const std::string& path) {
  Reader r(path);
  r.expect_magic("DF3A");
  r.expect_version(r.u32());
  const uint32_t n = r.u32();
  const uint32_t z = r.u32();
  const uint32_t rate = r.u32();
  const uint64_t count = checked_elements(n, z, 1, path);
  if (rate == 0) throw DimensionOverflowError(path + ": zero feature rate");
  const auto block = r.f32_block(count);
  r.expect_eof();
  AudioFeatureSequence audio;
  audio.n_frames = static_cast<int>(n);
  audio.feature_dim = static_cast<int>(z);
  audio.feature_rate = static_cast<int>(rate);
  audio.features.assign(block.begin(), block.end());
  return audio;
}

void write_mask(const std::vector<uint8_t>& mask, const std::string& path) {
  require(!mask.empty(), "write_mask: empty mask");
  Writer w(path);
  w.magic("DF3M");
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(mask.size()));
  for (uint8_t b : mask) {
    require(b <= 1, "write_mask: entries must be 0/1");
    w.byte(b);
  }
  w.close();
}

std::vector<uint8_t> read_mask(const std::string& path) {
  Reader r(path);
  r.expect_magic("DF3M");
  r.expect_version(r.u32());
  const uint32_t v = r.u32();
  checked_elements(v, 1, 1, path);
  std::vector<uint8_t> mask(v);
  for (uint32_t i = 0; i < v; ++i) {
    mask[i] = r.byte();
    if (mask[i] > 1) throw FormatError(path + ": mask byte outside {0,1}");
  }
  r.expect_eof();
  return mask;
}

void write_topology(const std::vector<uint32_t>& triangles, const std::string& path) {
  require(triangles.size() % 3 == 0, "write_topology: triangle list not a multiple of 3");
  Writer w(path);
  w.magic("DF3T");
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(triangles.size() / 3));
  for (uint32_t idx : triangles) w.u32(idx);
  w.close();
}

std::vector<uint32_t> read_topology(const std::string& path) {
  Reader r(path);
  r.expect_magic("DF3T");
  r.expect_version(r.u32());
  const uint32_t f = r.u32();
  const uint64_t count = checked_elements(f, 3, 1, path);
  std::vector<uint32_t> tris(count);
  for (uint64_t i = 0; i < count; ++i) {
    unsigned char b[4] = {};
    b[0] = r.byte();
    b[1] = r.byte();
    b[2] = r.byte();
    b[3] = r.byte();
    tris[i] = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
              (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  r.expect_eof();
  return tris;
}

namespace {

void write_tensor(Writer& w, const Mat& m) {
  w.u32(static_cast<uint32_t>(m.rows));
  w.u32(static_cast<uint32_t>(m.cols));
  for (double v : m.a) w.f64(v);
}

Mat read_tensor(Reader& r, const std::string& path) {
  const uint32_t rows = r.u32();
  const uint32_t cols = r.u32();
  checked_elements(rows, cols, 1, path);
  Mat m(static_cast<int>(rows), static_cast<int>(cols));
  for (double& v : m.a) v = r.f64();
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Writer w(path);
  w.magic("DF3C");
  w.u32(ckpt.version);

  const DenoiserConfig& c = ckpt.config;
  w.u32(static_cast<uint32_t>(c.latent_dim));
  w.u32(static_cast<uint32_t>(c.num_layers));
  w.u32(static_cast<uint32_t>(c.num_heads));
  w.u32(static_cast<uint32_t>(c.n_vertices));
  w.u32(static_cast<uint32_t>(c.max_frames));
  w.u32(static_cast<uint32_t>(c.audio_dim));
  w.u32(static_cast<uint32_t>(c.schedule_kind));
  w.u32(static_cast<uint32_t>(c.diffusion_steps));
  w.byte(c.diffuse_identity ? 1 : 0);
  w.byte(c.diffuse_pose ? 1 : 0);

  w.u32(static_cast<uint32_t>(ckpt.schedule.T));
  for (double a : ckpt.schedule.alphas) w.f64(a);
  for (double a : ckpt.schedule.alpha_bars) w.f64(a);

  w.u64(ckpt.train_steps);
  w.f64(ckpt.trained_mask_prob);

  w.u32(static_cast<uint32_t>(ckpt.rig.lip_mask.size()));
  for (double p : ckpt.rig.pivot) w.f64(p);
  for (uint8_t b : ckpt.rig.lip_mask) w.byte(b);

  w.u32(static_cast<uint32_t>(ckpt.scaler.identity_mean.size()));
  for (double m : ckpt.scaler.identity_mean) w.f64(m);
  w.f64(ckpt.scaler.identity_scale);
  w.f64(ckpt.scaler.motion_scale);
  w.f64(ckpt.scaler.pose_scale);

  auto tensors = enumerate_tensors(ckpt.params);
  w.u32(static_cast<uint32_t>(tensors.size()));
  for (auto& [name, m] : tensors) write_tensor(w, *m);

  w.byte(ckpt.has_expert ? 1 : 0);
  if (ckpt.has_expert) {
    w.byte(ckpt.expert_frozen ? 1 : 0);
    const SyncExpertConfig& e = ckpt.expert.config;
    w.u32(static_cast<uint32_t>(e.segment_len));
    w.u32(static_cast<uint32_t>(e.lip_vertex_count));
    w.u32(static_cast<uint32_t>(e.audio_dim));
    w.u32(static_cast<uint32_t>(e.hidden_dim));
    w.u32(static_cast<uint32_t>(e.embed_dim));
    auto et = enumerate_tensors(const_cast<SyncExpertParams&>(ckpt.expert));
    for (auto& [name, m] : et) write_tensor(w, *m);
  }
  w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic("DF3C");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kFormatVersion) {
    throw UnsupportedVersionError(path + ": unsupported checkpoint version");
  }

  DenoiserConfig& c = ckpt.config;
  c.latent_dim = static_cast<int>(r.u32());
  c.num_layers = static_cast<int>(r.u32());
  c.num_heads = static_cast<int>(r.u32());
  c.n_vertices = static_cast<int>(r.u32());
  c.max_frames = static_cast<int>(r.u32());
  c.audio_dim = static_cast<int>(r.u32());
  c.schedule_kind = static_cast<ScheduleKind>(r.u32());
  c.diffusion_steps = static_cast<int>(r.u32());
  c.diffuse_identity = r.byte() != 0;
  c.diffuse_pose = r.byte() != 0;
  c.validate();

  ckpt.schedule.kind = c.schedule_kind;
  ckpt.schedule.T = static_cast<int>(r.u32());
  checked_elements(static_cast<uint64_t>(ckpt.schedule.T), 1, 1, path);
  ckpt.schedule.alphas.resize(ckpt.schedule.T);
  for (double& a : ckpt.schedule.alphas) a = r.f64();
  ckpt.schedule.alpha_bars.resize(ckpt.schedule.T + 1);
  for (double& a : ckpt.schedule.alpha_bars) a = r.f64();

  ckpt.train_steps = r.u64();
  ckpt.trained_mask_prob = r.f64();

  const uint32_t v = r.u32();
  checked_elements(v, 1, 1, path);
  std::array<double, 3> pivot{};
  for (double& p : pivot) p = r.f64();
  std::vector<uint8_t> lip(v);
  for (auto& b : lip) b = r.byte();
  ckpt.rig = RigSpec::from_lip_mask(pivot, std::move(lip));

  const uint32_t v3 = r.u32();
  checked_elements(v3, 1, 1, path);
  ckpt.scaler.identity_mean.resize(v3);
  for (double& m : ckpt.scaler.identity_mean) m = r.f64();
  ckpt.scaler.identity_scale = r.f64();
  ckpt.scaler.motion_scale = r.f64();
  ckpt.scaler.pose_scale = r.f64();

  ckpt.params = make_params(c);
  auto tensors = enumerate_tensors(ckpt.params);
  const uint32_t tensor_count = r.u32();
  if (tensor_count != tensors.size()) {
    throw FormatError(path + ": tensor count does not match config");
  }
  for (auto& [name, m] : tensors) {
    Mat loaded = read_tensor(r, path);
    if (loaded.rows != m->rows || loaded.cols != m->cols) {
      throw FormatError(path + ": tensor shape mismatch for " + name);
    }
    *m = std::move(loaded);
  }

  ckpt.has_expert = r.byte() != 0;
  if (ckpt.has_expert) {
    ckpt.expert_frozen = r.byte() != 0;
    SyncExpertConfig e;
    e.segment_len = static_cast<int>(r.u32());
    e.lip_vertex_count = static_cast<int>(r.u32());
    e.audio_dim = static_cast<int>(r.u32());
    e.hidden_dim = static_cast<int>(r.u32());
    e.embed_dim = static_cast<int>(r.u32());
    ckpt.expert = make_sync_params(e);
    for (auto& [name, m] : enumerate_tensors(ckpt.expert)) {
      Mat loaded = read_tensor(r, path);
      if (loaded.rows != m->rows || loaded.cols != m->cols) {
        throw FormatError(path + ": expert tensor shape mismatch for " + name);
      }
      *m = std::move(loaded);
    }
  }
  r.expect_eof();
  return ckpt;
}

std::vector<std::string> export_obj(const FaceMeshSequence& seq,
                                    const std::vector<uint32_t>& triangles,
                                    const std::string& out_dir) {
  seq.validate();
  require(triangles.size() % 3 == 0, "export_obj: triangle list not a multiple of 3");
  for (uint32_t idx : triangles) {
    require(idx < static_cast<uint32_t>(seq.n_vertices), "export_obj: vertex index out of range");
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  paths.reserve(seq.n_frames);
  for (int i = 0; i < seq.n_frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.obj", i);
    const std::string path = out_dir + "/" + name;
    std::ofstream out(path, std::ios::trunc);
    if (!out.good()) throw FormatError("export_obj: cannot open " + path);
    const double* f = seq.frame(i);
    char line[128];
    for (int v = 0; v < seq.n_vertices; ++v) {
      std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f\n", f[3 * v], f[3 * v + 1],
                    f[3 * v + 2]);
      out << line;
    }
    for (size_t t = 0; t < triangles.size(); t += 3) {
      out << "f " << triangles[t] + 1 << ' ' << triangles[t + 1] + 1 << ' '
          << triangles[t + 2] + 1 << '\n';
    }
    out.flush();
    if (!out.good()) throw FormatError("export_obj: write failed for " + path);
    paths.push_back(path);
  }
  return paths;
}

void write_representation(const FaceRepresentation& repr, int fps, const std::string& path) {
  repr.validate();
  const Mat flat = repr.flatten();
  AudioFeatureSequence carrier;
  carrier.n_frames = flat.rows;
  carrier.feature_dim = flat.cols;
  carrier.feature_rate = fps;
  carrier.features = flat.a;
  write_audio(carrier, path);
}

FaceRepresentation read_representation(const std::string& path) {
  const AudioFeatureSequence carrier = read_audio(path);
  require(carrier.feature_dim % 3 == 0,
          "read_representation: channel count must be 3V+3");
  const int v = (carrier.feature_dim - 3) / 3;
  require(v >= 1, "read_representation: too few channels");
  Mat flat(carrier.n_frames, carrier.feature_dim);
  flat.a = carrier.features;
  return FaceRepresentation::unflatten(flat, v);
}

}  // namespace facediff
