#include "facediff/sync_expert.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "facediff/optim.hpp"
#include "facediff/rng.hpp"

namespace facediff {

void SyncExpertConfig::validate() const {
  require(segment_len >= 1, "SyncExpertConfig: segment_len >= 1");
  require(lip_vertex_count >= 1, "SyncExpertConfig: lip_vertex_count >= 1");
  require(audio_dim >= 1, "SyncExpertConfig: audio_dim >= 1");
  require(hidden_dim >= 1 && embed_dim >= 1, "SyncExpertConfig: encoder dims >= 1");
}

std::vector<std::pair<std::string, Mat*>> enumerate_tensors(SyncExpertParams& p) {
  return {
      {"lip.w1", &p.lip_w1}, {"lip.b1", &p.lip_b1}, {"lip.w2", &p.lip_w2},
      {"lip.b2", &p.lip_b2}, {"aud.w1", &p.aud_w1}, {"aud.b1", &p.aud_b1},
      {"aud.w2", &p.aud_w2}, {"aud.b2", &p.aud_b2},
  };
}

SyncExpertParams make_sync_params(const SyncExpertConfig& config) {
  config.validate();
  SyncExpertParams p;
  p.config = config;
  p.lip_w1 = Mat(config.hidden_dim, config.lip_input_dim());
  p.lip_b1 = Mat(config.hidden_dim, 1);
  p.lip_w2 = Mat(config.embed_dim, config.hidden_dim);
  p.lip_b2 = Mat(config.embed_dim, 1);
  p.aud_w1 = Mat(config.hidden_dim, config.audio_input_dim());
  p.aud_b1 = Mat(config.hidden_dim, 1);
  p.aud_w2 = Mat(config.embed_dim, config.hidden_dim);
  p.aud_b2 = Mat(config.embed_dim, 1);
  return p;
}

SyncExpertParams init_sync_params(const SyncExpertConfig& config, uint64_t seed) {
  SyncExpertParams p = make_sync_params(config);
  Prng rng(seed);
  for (auto& [name, m] : enumerate_tensors(p)) {
    if (name[4] == 'b') continue;  // biases stay zero
    const double a = std::sqrt(6.0 / (m->rows + m->cols));
    for (double& x : m->a) x = a * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

namespace {

constexpr double kNormEps = 1e-12;

struct EncoderCache {
  std::vector<double> x;      // input
  std::vector<double> h_pre;  // W1 x + b1
  std::vector<double> h_act;  // gelu
  std::vector<double> u;      // W2 h + b2, pre-normalization
  double norm = 0.0;
  std::vector<double> e;      // unit embedding
};

void encode(const Mat& w1, const Mat& b1, const Mat& w2, const Mat& b2,
            std::vector<double> input, EncoderCache& c) {
  c.x = std::move(input);
  require(static_cast<int>(c.x.size()) == w1.cols, "sync encoder: input size mismatch");
  const int hid = w1.rows;
  const int emb = w2.rows;
  c.h_pre.assign(hid, 0.0);
  for (int i = 0; i < hid; ++i) {
    const double* w = w1.row(i);
    double acc = b1.a[i];
    for (int j = 0; j < w1.cols; ++j) acc += w[j] * c.x[j];
    c.h_pre[i] = acc;
  }
  c.h_act.resize(hid);
  for (int i = 0; i < hid; ++i) c.h_act[i] = kern::gelu(c.h_pre[i]);
  c.u.assign(emb, 0.0);
  for (int i = 0; i < emb; ++i) {
    const double* w = w2.row(i);
    double acc = b2.a[i];
    for (int j = 0; j < hid; ++j) acc += w[j] * c.h_act[j];
    c.u[i] = acc;
  }
  double sq = kNormEps;
  for (double v : c.u) sq += v * v;
  c.norm = std::sqrt(sq);
  c.e.resize(emb);
  for (int i = 0; i < emb; ++i) c.e[i] = c.u[i] / c.norm;
}

// d(loss)/d(e) -> parameter grads (accumulated) and optionally d(loss)/d(x).
void encode_backward(const Mat& w1, const Mat& w2, const EncoderCache& c,
                     const std::vector<double>& d_e, Mat* g_w1, Mat* g_b1, Mat* g_w2, Mat* g_b2,
                     std::vector<double>* d_x) {
  const int hid = w1.rows;
  const int emb = w2.rows;
  // normalization backward: du = (de - e (e . de)) / norm
  double dot = 0.0;
  for (int i = 0; i < emb; ++i) dot += c.e[i] * d_e[i];
  std::vector<double> d_u(emb);
  for (int i = 0; i < emb; ++i) d_u[i] = (d_e[i] - c.e[i] * dot) / c.norm;

  std::vector<double> d_h(hid, 0.0);
  for (int i = 0; i < emb; ++i) {
    const double* w = w2.row(i);
    for (int j = 0; j < hid; ++j) d_h[j] += d_u[i] * w[j];
    if (g_w2) {
      double* gw = g_w2->row(i);
      for (int j = 0; j < hid; ++j) gw[j] += d_u[i] * c.h_act[j];
      g_b2->a[i] += d_u[i];
    }
  }
  std::vector<double> d_hpre(hid);
  for (int i = 0; i < hid; ++i) d_hpre[i] = d_h[i] * kern::gelu_grad(c.h_pre[i]);
  if (d_x) d_x->assign(w1.cols, 0.0);
  for (int i = 0; i < hid; ++i) {
    const double* w = w1.row(i);
    if (g_w1) {
      double* gw = g_w1->row(i);
      for (int j = 0; j < w1.cols; ++j) gw[j] += d_hpre[i] * c.x[j];
      g_b1->a[i] += d_hpre[i];
    }
    if (d_x) {
      for (int j = 0; j < w1.cols; ++j) (*d_x)[j] += d_hpre[i] * w[j];
    }
  }
}

std::vector<double> flatten_mat(const Mat& m) { return m.a; }

}  // namespace

std::vector<double> embed_lip(const SyncExpertParams& p, const std::vector<double>& segment) {
  EncoderCache c;
  encode(p.lip_w1, p.lip_b1, p.lip_w2, p.lip_b2, segment, c);
  return c.e;
}

std::vector<double> embed_audio(const SyncExpertParams& p, const std::vector<double>& segment) {
  EncoderCache c;
  encode(p.aud_w1, p.aud_b1, p.aud_w2, p.aud_b2, segment, c);
  return c.e;
}

double sync_distance(const Mat& lip_motion_segment, const Mat& audio_segment,
                     const SyncExpertParams& params) {
  require(lip_motion_segment.rows == params.config.segment_len &&
              audio_segment.rows == params.config.segment_len,
          "sync_distance: segment length mismatch");
  const auto el = embed_lip(params, flatten_mat(lip_motion_segment));
  const auto ea = embed_audio(params, flatten_mat(audio_segment));
  double cos = 0.0;
  for (size_t i = 0; i < el.size(); ++i) cos += el[i] * ea[i];
  return 1.0 - cos;
}

Mat lip_columns(const Mat& motion, const RigSpec& rig) {
  require(motion.cols == 3 * rig.n_vertices(), "lip_columns: motion width mismatch");
  const auto idx = rig.lip_vertex_indices();
  Mat out(motion.rows, static_cast<int>(idx.size()) * 3);
  for (int i = 0; i < motion.rows; ++i) {
    const double* src = motion.row(i);
    double* dst = out.row(i);
    for (size_t k = 0; k < idx.size(); ++k) {
      dst[3 * k] = src[3 * idx[k]];
      dst[3 * k + 1] = src[3 * idx[k] + 1];
      dst[3 * k + 2] = src[3 * idx[k] + 2];
    }
  }
  return out;
}

SyncExpertParams train_sync_expert(const std::vector<SyncUtterance>& dataset,
                                   const SyncExpertConfig& config,
                                   const SyncTrainOptions& options) {
  config.validate();
  require(!dataset.empty(), "train_sync_expert: empty dataset");
  const int n = config.segment_len;
  for (const auto& u : dataset) {
    require(u.lip_motion.rows == u.audio.rows, "train_sync_expert: timeline mismatch");
    require(u.lip_motion.rows >= n + options.min_shift,
            "train_sync_expert: utterance shorter than segment + shift");
    require(u.lip_motion.cols == config.lip_input_dim() / n,
            "train_sync_expert: lip width mismatch");
    require(u.audio.cols == config.audio_dim, "train_sync_expert: audio width mismatch");
  }

  SyncExpertParams params = init_sync_params(config, options.seed);
  SyncExpertParams grads = make_sync_params(config);
  Adam opt(options.learning_rate);
  Prng rng(options.seed ^ 0x5CE11AB5u);

  auto segment = [&](const Mat& m, int start) {
    Mat s(n, m.cols);
    std::memcpy(s.a.data(), m.row(start), sizeof(double) * s.a.size());
    return s;
  };

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (int it = 0; it < options.pairs_per_epoch; ++it) {
      const int ui = rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
      const auto& utt = dataset[ui];
      const int max_start = utt.lip_motion.rows - n;
      const int i = rng.uniform_int(0, max_start);

      double label = rng.bernoulli(0.5) ? 1.0 : 0.0;
      Mat lip_seg = segment(utt.lip_motion, i);
      Mat aud_seg;
      if (label > 0.5) {
        aud_seg = segment(utt.audio, i);
      } else if (dataset.size() >= 2 && rng.bernoulli(0.5)) {
        // cross-utterance negative
        int uj = rng.uniform_int(0, static_cast<int>(dataset.size()) - 2);
        if (uj >= ui) ++uj;
        const auto& other = dataset[uj];
        aud_seg = segment(other.audio, rng.uniform_int(0, other.audio.rows - n));
      } else {
        // temporal-shift negative, offset at least min_shift
        int j = i;
        while (std::abs(j - i) < options.min_shift) j = rng.uniform_int(0, max_start);
        aud_seg = segment(utt.audio, j);
      }
      if (options.shuffle_labels) label = rng.bernoulli(0.5) ? 1.0 : 0.0;

      EncoderCache cl, ca;
      encode(params.lip_w1, params.lip_b1, params.lip_w2, params.lip_b2, lip_seg.a, cl);
      encode(params.aud_w1, params.aud_b1, params.aud_w2, params.aud_b2, aud_seg.a, ca);
      double cos = 0.0;
      for (int k = 0; k < config.embed_dim; ++k) cos += cl.e[k] * ca.e[k];
      double p = 0.5 * (cos + 1.0);
      p = std::clamp(p, 1e-7, 1.0 - 1e-7);
      // BCE: dL/dcos = (p - y) / (2 p (1-p))
      const double d_cos = (p - label) / (2.0 * p * (1.0 - p));

      for (auto& [nm, g] : enumerate_tensors(grads)) g->zero();
      std::vector<double> d_el(config.embed_dim), d_ea(config.embed_dim);
      for (int k = 0; k < config.embed_dim; ++k) {
        d_el[k] = d_cos * ca.e[k];
        d_ea[k] = d_cos * cl.e[k];
      }
      encode_backward(params.lip_w1, params.lip_w2, cl, d_el, &grads.lip_w1, &grads.lip_b1,
                      &grads.lip_w2, &grads.lip_b2, nullptr);
      encode_backward(params.aud_w1, params.aud_w2, ca, d_ea, &grads.aud_w1, &grads.aud_b1,
                      &grads.aud_w2, &grads.aud_b2, nullptr);

      auto pl = enumerate_tensors(params);
      auto gl = enumerate_tensors(grads);
      opt.step(pl, gl);
    }
  }
  return params;
}

double sync_loss(const Mat& pred_motion, const Mat& audio, const RigSpec& rig,
                 const SyncExpertParams& params, int num_segments, uint64_t seed,
                 Mat* grad_motion) {
  const int n = params.config.segment_len;
  const int frames = pred_motion.rows;
  require(frames >= n, "sync_loss: sequence shorter than segment length");
  require(audio.rows == frames, "sync_loss: motion/audio timeline mismatch");
  require(num_segments >= 1, "sync_loss: num_segments >= 1");

  const auto lip_idx = rig.lip_vertex_indices();
  require(static_cast<int>(lip_idx.size()) == params.config.lip_vertex_count,
          "sync_loss: rig lip count differs from expert config");
  const Mat lip = lip_columns(pred_motion, rig);

  if (grad_motion) *grad_motion = Mat(pred_motion.rows, pred_motion.cols);

  Prng rng(seed);
  double total = 0.0;
  for (int sgi = 0; sgi < num_segments; ++sgi) {
    const int start = rng.uniform_int(0, frames - n);
    std::vector<double> lip_seg(static_cast<size_t>(n) * lip.cols);
    std::memcpy(lip_seg.data(), lip.row(start), sizeof(double) * lip_seg.size());
    std::vector<double> aud_seg(static_cast<size_t>(n) * audio.cols);
    std::memcpy(aud_seg.data(), audio.row(start), sizeof(double) * aud_seg.size());

    EncoderCache cl, ca;
    encode(params.lip_w1, params.lip_b1, params.lip_w2, params.lip_b2, std::move(lip_seg), cl);
    encode(params.aud_w1, params.aud_b1, params.aud_w2, params.aud_b2, std::move(aud_seg), ca);
    double cos = 0.0;
    for (int k = 0; k < params.config.embed_dim; ++k) cos += cl.e[k] * ca.e[k];
    total += 1.0 - cos;

    if (grad_motion) {
      // d(1 - cos)/d e_lip = -e_audio, scaled by the segment average
      std::vector<double> d_el(params.config.embed_dim);
      for (int k = 0; k < params.config.embed_dim; ++k) {
        d_el[k] = -ca.e[k] / num_segments;
      }
      std::vector<double> d_x;
      encode_backward(params.lip_w1, params.lip_w2, cl, d_el, nullptr, nullptr, nullptr, nullptr,
                      &d_x);
      // scatter flattened segment grads back into full-motion coordinates
      for (int f = 0; f < n; ++f) {
        double* dst = grad_motion->row(start + f);
        const double* src = d_x.data() + static_cast<size_t>(f) * lip.cols;
        for (size_t k = 0; k < lip_idx.size(); ++k) {
          dst[3 * lip_idx[k]] += src[3 * k];
          dst[3 * lip_idx[k] + 1] += src[3 * k + 1];
          dst[3 * lip_idx[k] + 2] += src[3 * k + 2];
        }
      }
    }
  }
  return total / num_segments;
}

}  // namespace facediff
