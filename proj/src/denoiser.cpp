#include "facediff/denoiser.hpp"

#include <cmath>
#include <cstring>

#include "facediff/rng.hpp"

namespace facediff {

void DenoiserConfig::validate() const {
  require(latent_dim > 0 && num_layers > 0 && num_heads > 0, "DenoiserConfig: sizes positive");
  require(latent_dim % num_heads == 0, "DenoiserConfig: latent_dim divisible by num_heads");
  require(n_vertices >= 4 && max_frames >= 1 && audio_dim >= 1, "DenoiserConfig: dims positive");
  require(diffusion_steps >= 1, "DenoiserConfig: diffusion_steps >= 1");
}

void sinusoidal_embedding(double pos, int dim, double* out) {
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out[2 * i] = std::sin(pos * freq);
    out[2 * i + 1] = std::cos(pos * freq);
  }
  if (dim % 2 == 1) out[dim - 1] = 0.0;
}

std::vector<std::pair<std::string, Mat*>> enumerate_tensors(DenoiserParams& p) {
  std::vector<std::pair<std::string, Mat*>> v;
  v.reserve(32 + p.layers.size() * 16);
  v.emplace_back("time.w", &p.w_time);
  v.emplace_back("time.b", &p.b_time);
  v.emplace_back("audio.w", &p.w_audio);
  v.emplace_back("audio.b", &p.b_audio);
  v.emplace_back("id.w", &p.w_id);
  v.emplace_back("id.b", &p.b_id);
  v.emplace_back("motion.w", &p.w_motion);
  v.emplace_back("motion.b", &p.b_motion);
  v.emplace_back("pose.w", &p.w_pose);
  v.emplace_back("pose.b", &p.b_pose);
  v.emplace_back("emb.time", &p.emb_time);
  v.emplace_back("emb.audio", &p.emb_audio);
  v.emplace_back("emb.id", &p.emb_id);
  v.emplace_back("emb.face", &p.emb_face);
  v.emplace_back("null_audio", &p.null_audio);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    v.emplace_back(pre + "ln1.g", &L.ln1_g);
    v.emplace_back(pre + "ln1.b", &L.ln1_b);
    v.emplace_back(pre + "attn.wq", &L.wq);
    v.emplace_back(pre + "attn.bq", &L.bq);
    v.emplace_back(pre + "attn.wk", &L.wk);
    v.emplace_back(pre + "attn.bk", &L.bk);
    v.emplace_back(pre + "attn.wv", &L.wv);
    v.emplace_back(pre + "attn.bv", &L.bv);
    v.emplace_back(pre + "attn.wo", &L.wo);
    v.emplace_back(pre + "attn.bo", &L.bo);
    v.emplace_back(pre + "ln2.g", &L.ln2_g);
    v.emplace_back(pre + "ln2.b", &L.ln2_b);
    v.emplace_back(pre + "mlp.w1", &L.w1);
    v.emplace_back(pre + "mlp.b1", &L.b1);
    v.emplace_back(pre + "mlp.w2", &L.w2);
    v.emplace_back(pre + "mlp.b2", &L.b2);
  }
  v.emplace_back("final_ln.g", &p.lnf_g);
  v.emplace_back("final_ln.b", &p.lnf_b);
  v.emplace_back("out.w", &p.w_out);
  v.emplace_back("out.b", &p.b_out);
  return v;
}

std::vector<std::pair<std::string, const Mat*>> enumerate_tensors(const DenoiserParams& p) {
  auto mut = enumerate_tensors(const_cast<DenoiserParams&>(p));
  std::vector<std::pair<std::string, const Mat*>> v;
  v.reserve(mut.size());
  for (auto& [n, m] : mut) v.emplace_back(n, m);
  return v;
}

size_t param_count(const DenoiserParams& p) {
  size_t n = 0;
  for (auto& [name, m] : enumerate_tensors(p)) n += m->size();
  return n;
}

DenoiserParams make_params(const DenoiserConfig& config) {
  config.validate();
  const int c = config.latent_dim;
  const int v3 = 3 * config.n_vertices;
  const int hid = config.mlp_hidden();
  DenoiserParams p;
  p.w_time = Mat(c, c);
  p.b_time = Mat(c, 1);
  p.w_audio = Mat(c, config.audio_dim);
  p.b_audio = Mat(c, 1);
  p.w_id = Mat(c, v3);
  p.b_id = Mat(c, 1);
  p.w_motion = Mat(c, v3);
  p.b_motion = Mat(c, 1);
  p.w_pose = Mat(c, 3);
  p.b_pose = Mat(c, 1);
  p.emb_time = Mat(c, 1);
  p.emb_audio = Mat(c, 1);
  p.emb_id = Mat(c, 1);
  p.emb_face = Mat(c, 1);
  p.null_audio = Mat(config.audio_dim, 1);
  p.layers.resize(config.num_layers);
  for (auto& L : p.layers) {
    L.ln1_g = Mat(c, 1);
    L.ln1_b = Mat(c, 1);
    L.wq = Mat(c, c);
    L.bq = Mat(c, 1);
    L.wk = Mat(c, c);
    L.bk = Mat(c, 1);
    L.wv = Mat(c, c);
    L.bv = Mat(c, 1);
    L.wo = Mat(c, c);
    L.bo = Mat(c, 1);
    L.ln2_g = Mat(c, 1);
    L.ln2_b = Mat(c, 1);
    L.w1 = Mat(hid, c);
    L.b1 = Mat(hid, 1);
    L.w2 = Mat(c, hid);
    L.b2 = Mat(c, 1);
  }
  p.lnf_g = Mat(c, 1);
  p.lnf_b = Mat(c, 1);
  p.w_out = Mat(config.repr_cols(), c);
  p.b_out = Mat(config.repr_cols(), 1);
  return p;
}

DenoiserParams init_params(const DenoiserConfig& config, uint64_t seed) {
  DenoiserParams p = make_params(config);
  Prng rng(seed);
  for (auto& [name, m] : enumerate_tensors(p)) {
    const auto dot = name.rfind('.');
    const std::string leaf = (dot == std::string::npos) ? name : name.substr(dot + 1);
    if (leaf == "g") {
      std::fill(m->a.begin(), m->a.end(), 1.0);
    } else if (!leaf.empty() && leaf[0] == 'b') {
      // biases start at zero
    } else if (name.rfind("emb.", 0) == 0) {
      for (double& x : m->a) x = 0.02 * rng.normal();
    } else if (name == "null_audio") {
      for (double& x : m->a) x = 0.1 * rng.normal();
    } else {
      double a = std::sqrt(6.0 / (m->rows + m->cols));
      if (name == "out.w") a *= 0.01;  // untrained model predicts near-zero X0
      for (double& x : m->a) x = a * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

namespace {

constexpr double kLnEps = 1e-5;

void ln_forward(const Mat& x, const Mat& g, const Mat& b, Mat& y, Mat& xhat,
                std::vector<double>& rstd) {
  const int n = x.cols;
  y = Mat(x.rows, n);
  xhat = Mat(x.rows, n);
  rstd.assign(x.rows, 0.0);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xi[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= n;
    const double r = 1.0 / std::sqrt(var + kLnEps);
    rstd[i] = r;
    double* xh = xhat.row(i);
    double* yi = y.row(i);
    for (int j = 0; j < n; ++j) {
      xh[j] = (xi[j] - mean) * r;
      yi[j] = xh[j] * g.a[j] + b.a[j];
    }
  }
}

// dx is assigned; dg/db accumulate.
void ln_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd, const Mat& g,
                 Mat& dx, Mat& dg, Mat& db) {
  const int n = dy.cols;
  dx = Mat(dy.rows, n);
  for (int i = 0; i < dy.rows; ++i) {
    const double* dyi = dy.row(i);
    const double* xh = xhat.row(i);
    double* dxi = dx.row(i);
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double dxh = dyi[j] * g.a[j];
      m1 += dxh;
      m2 += dxh * xh[j];
      dg.a[j] += dyi[j] * xh[j];
      db.a[j] += dyi[j];
    }
    m1 /= n;
    m2 /= n;
    for (int j = 0; j < n; ++j) {
      const double dxh = dyi[j] * g.a[j];
      dxi[j] = (dxh - m1 - xh[j] * m2) * rstd[i];
    }
  }
}

void colsum_into(const Mat& m, Mat& acc) {
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (int j = 0; j < m.cols; ++j) acc.a[j] += r[j];
  }
}

void add_matmul_tn(const Mat& A, const Mat& B, Mat& acc) {
  Mat tmp;
  kern::matmul_tn(A, B, tmp);
  for (size_t i = 0; i < acc.a.size(); ++i) acc.a[i] += tmp.a[i];
}

Mat slice_rows(const Mat& m, int r0, int r1) {
  Mat out(r1 - r0, m.cols);
  std::memcpy(out.a.data(), m.row(r0), sizeof(double) * out.a.size());
  return out;
}

Mat slice_cols(const Mat& m, int c0, int c1) {
  Mat out(m.rows, c1 - c0);
  for (int i = 0; i < m.rows; ++i) {
    std::memcpy(out.row(i), m.row(i) + c0, sizeof(double) * (c1 - c0));
  }
  return out;
}

Mat head_slice(const Mat& m, int head, int head_dim) {
  return slice_cols(m, head * head_dim, (head + 1) * head_dim);
}

void add_head_slice(Mat& dst, const Mat& src, int head, int head_dim) {
  for (int i = 0; i < src.rows; ++i) {
    const double* s = src.row(i);
    double* d = dst.row(i) + head * head_dim;
    for (int j = 0; j < head_dim; ++j) d[j] += s[j];
  }
}

struct LayerCache {
  Mat x_in;
  Mat xhat1, y1;
  std::vector<double> rstd1;
  Mat q, k, v;
  std::vector<Mat> probs;  // per head, S x S
  Mat attn_concat;
  Mat resid1;
  Mat xhat2, y2;
  std::vector<double> rstd2;
  Mat h_pre, h_act;
};

}  // namespace

struct DenoiserCache {
  int t = 0;
  int n_frames = 0;
  std::vector<double> time_embed;
  Mat audio_in;
  Mat x_t_in;
  std::vector<LayerCache> layers;
  Mat x_final;
  Mat xhatf, f_norm;
  std::vector<double> rstdf;
};

DenoiserCache* new_denoiser_cache() { return new DenoiserCache(); }
void free_denoiser_cache(DenoiserCache* c) { delete c; }

namespace {

// One transformer block, writing intermediates into lc.
void encoder_layer_forward(const AttnLayerParams& L, const DenoiserConfig& cfg, LayerCache& lc,
                           Mat& x) {
  const int s = x.rows;
  const int c = cfg.latent_dim;
  const int heads = cfg.num_heads;
  const int hd = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  lc.x_in = x;
  ln_forward(x, L.ln1_g, L.ln1_b, lc.y1, lc.xhat1, lc.rstd1);
  kern::matmul_nt(lc.y1, L.wq, lc.q);
  kern::add_row_bias(lc.q, L.bq);
  kern::matmul_nt(lc.y1, L.wk, lc.k);
  kern::add_row_bias(lc.k, L.bk);
  kern::matmul_nt(lc.y1, L.wv, lc.v);
  kern::add_row_bias(lc.v, L.bv);

  lc.probs.assign(heads, Mat());
  lc.attn_concat = Mat(s, c);
  for (int h = 0; h < heads; ++h) {
    const Mat qh = head_slice(lc.q, h, hd);
    const Mat kh = head_slice(lc.k, h, hd);
    const Mat vh = head_slice(lc.v, h, hd);
    Mat& scores = lc.probs[h];
    kern::matmul_nt(qh, kh, scores);
    for (double& x2 : scores.a) x2 *= scale;
    kern::softmax_rows(scores);
    Mat oh;
    kern::matmul_nn(scores, vh, oh);
    for (int i = 0; i < s; ++i) {
      std::memcpy(lc.attn_concat.row(i) + h * hd, oh.row(i), sizeof(double) * hd);
    }
  }
  Mat attn_out;
  kern::matmul_nt(lc.attn_concat, L.wo, attn_out);
  kern::add_row_bias(attn_out, L.bo);

  lc.resid1 = lc.x_in;
  for (size_t i = 0; i < lc.resid1.a.size(); ++i) lc.resid1.a[i] += attn_out.a[i];

  ln_forward(lc.resid1, L.ln2_g, L.ln2_b, lc.y2, lc.xhat2, lc.rstd2);
  kern::matmul_nt(lc.y2, L.w1, lc.h_pre);
  kern::add_row_bias(lc.h_pre, L.b1);
  lc.h_act = Mat(lc.h_pre.rows, lc.h_pre.cols);
  for (size_t i = 0; i < lc.h_pre.a.size(); ++i) lc.h_act.a[i] = kern::gelu(lc.h_pre.a[i]);
  Mat mlp_out;
  kern::matmul_nt(lc.h_act, L.w2, mlp_out);
  kern::add_row_bias(mlp_out, L.b2);

  x = lc.resid1;
  for (size_t i = 0; i < x.a.size(); ++i) x.a[i] += mlp_out.a[i];
}

// Backward through one block. dx holds d(loss)/d(layer output) on entry and
// d(loss)/d(layer input) on exit.
void encoder_layer_backward(const AttnLayerParams& L, AttnLayerParams& G,
                            const DenoiserConfig& cfg, const LayerCache& lc, Mat& dx) {
  const int s = dx.rows;
  const int c = cfg.latent_dim;
  const int heads = cfg.num_heads;
  const int hd = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // MLP half: x2 = resid1 + W2'(gelu(W1'(ln2) ...))
  const Mat& d_x2 = dx;
  Mat d_h_act;
  kern::matmul_nn(d_x2, L.w2, d_h_act);
  add_matmul_tn(d_x2, lc.h_act, G.w2);
  colsum_into(d_x2, G.b2);
  Mat d_h_pre(d_h_act.rows, d_h_act.cols);
  for (size_t i = 0; i < d_h_act.a.size(); ++i) {
    d_h_pre.a[i] = d_h_act.a[i] * kern::gelu_grad(lc.h_pre.a[i]);
  }
  Mat d_y2;
  kern::matmul_nn(d_h_pre, L.w1, d_y2);
  add_matmul_tn(d_h_pre, lc.y2, G.w1);
  colsum_into(d_h_pre, G.b1);
  Mat d_resid1_from_ln;
  ln_backward(d_y2, lc.xhat2, lc.rstd2, L.ln2_g, d_resid1_from_ln, G.ln2_g, G.ln2_b);
  Mat d_resid1 = d_x2;
  for (size_t i = 0; i < d_resid1.a.size(); ++i) d_resid1.a[i] += d_resid1_from_ln.a[i];

  // Attention half: resid1 = x_in + Wo'(concat heads(softmax(qk') v))
  const Mat& d_attn_out = d_resid1;
  Mat d_concat;
  kern::matmul_nn(d_attn_out, L.wo, d_concat);
  add_matmul_tn(d_attn_out, lc.attn_concat, G.wo);
  colsum_into(d_attn_out, G.bo);

  Mat dq(s, c), dk(s, c), dv(s, c);
  for (int h = 0; h < heads; ++h) {
    const Mat qh = head_slice(lc.q, h, hd);
    const Mat kh = head_slice(lc.k, h, hd);
    const Mat vh = head_slice(lc.v, h, hd);
    const Mat d_oh = head_slice(d_concat, h, hd);
    const Mat& p = lc.probs[h];

    Mat d_p;
    kern::matmul_nt(d_oh, vh, d_p);
    Mat d_vh;
    kern::matmul_tn(p, d_oh, d_vh);

    // softmax backward: ds = p * (dp - rowsum(dp * p))
    Mat d_scores(s, s);
    for (int i = 0; i < s; ++i) {
      const double* pi = p.row(i);
      const double* dpi = d_p.row(i);
      double dot = 0.0;
      for (int j = 0; j < s; ++j) dot += dpi[j] * pi[j];
      double* dsi = d_scores.row(i);
      for (int j = 0; j < s; ++j) dsi[j] = pi[j] * (dpi[j] - dot);
    }
    for (double& x : d_scores.a) x *= scale;

    Mat d_qh, d_kh;
    kern::matmul_nn(d_scores, kh, d_qh);
    kern::matmul_tn(d_scores, qh, d_kh);
    add_head_slice(dq, d_qh, h, hd);
    add_head_slice(dk, d_kh, h, hd);
    add_head_slice(dv, d_vh, h, hd);
  }

  Mat d_y1;
  kern::matmul_nn(dq, L.wq, d_y1);
  Mat tmp;
  kern::matmul_nn(dk, L.wk, tmp);
  for (size_t i = 0; i < d_y1.a.size(); ++i) d_y1.a[i] += tmp.a[i];
  kern::matmul_nn(dv, L.wv, tmp);
  for (size_t i = 0; i < d_y1.a.size(); ++i) d_y1.a[i] += tmp.a[i];
  add_matmul_tn(dq, lc.y1, G.wq);
  add_matmul_tn(dk, lc.y1, G.wk);
  add_matmul_tn(dv, lc.y1, G.wv);
  colsum_into(dq, G.bq);
  colsum_into(dk, G.bk);
  colsum_into(dv, G.bv);

  Mat d_x_from_ln;
  ln_backward(d_y1, lc.xhat1, lc.rstd1, L.ln1_g, d_x_from_ln, G.ln1_g, G.ln1_b);
  dx = d_resid1;
  for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += d_x_from_ln.a[i];
}

}  // namespace

Mat denoiser_forward(int t, const Mat& audio, const Mat& x_t, const DenoiserConfig& config,
                     const DenoiserParams& params, DenoiserCache* cache) {
  config.validate();
  require(t >= 1 && t <= config.diffusion_steps, "denoiser_forward: t out of range");
  const int n = audio.rows;
  require(n >= 1 && n <= config.max_frames, "denoiser_forward: frame count out of range");
  require(audio.cols == config.audio_dim, "denoiser_forward: audio dim mismatch");
  require(x_t.rows == n + 1, "denoiser_forward: x_t must have N+1 rows");
  require(x_t.cols == config.repr_cols(), "denoiser_forward: x_t column mismatch");

  const int c = config.latent_dim;
  const int v3 = 3 * config.n_vertices;
  const int s = 2 * n + 2;

  DenoiserCache local;
  DenoiserCache& cc = cache ? *cache : local;
  cc.t = t;
  cc.n_frames = n;
  cc.audio_in = audio;
  cc.x_t_in = x_t;

  cc.time_embed.resize(c);
  sinusoidal_embedding(static_cast<double>(t), c, cc.time_embed.data());

  Mat x(s, c);
  std::vector<double> pe(c);

  // token 0: diffusion step
  {
    double* r = x.row(0);
    for (int i = 0; i < c; ++i) {
      double acc = params.b_time.a[i];
      const double* w = params.w_time.row(i);
      for (int j = 0; j < c; ++j) acc += w[j] * cc.time_embed[j];
      r[i] = acc + params.emb_time.a[i];
    }
  }
  // tokens 1..N: audio
  {
    Mat proj;
    kern::matmul_nt(audio, params.w_audio, proj);
    for (int i = 0; i < n; ++i) {
      sinusoidal_embedding(static_cast<double>(i), c, pe.data());
      double* r = x.row(1 + i);
      const double* p = proj.row(i);
      for (int j = 0; j < c; ++j) {
        r[j] = p[j] + params.b_audio.a[j] + params.emb_audio.a[j] + pe[j];
      }
    }
  }
  // token N+1: identity (face-block position 0)
  {
    sinusoidal_embedding(0.0, c, pe.data());
    double* r = x.row(n + 1);
    const double* idv = x_t.row(0);
    for (int i = 0; i < c; ++i) {
      double acc = params.b_id.a[i];
      const double* w = params.w_id.row(i);
      for (int j = 0; j < v3; ++j) acc += w[j] * idv[j];
      r[i] = acc + params.emb_id.a[i] + pe[i];
    }
  }
  // tokens N+2 .. 2N+1: motion and pose projections summed per frame
  {
    const Mat motion = slice_cols(slice_rows(x_t, 1, n + 1), 0, v3);
    const Mat pose = slice_cols(slice_rows(x_t, 1, n + 1), v3, v3 + 3);
    Mat mproj, pproj;
    kern::matmul_nt(motion, params.w_motion, mproj);
    kern::matmul_nt(pose, params.w_pose, pproj);
    for (int i = 0; i < n; ++i) {
      sinusoidal_embedding(static_cast<double>(i + 1), c, pe.data());
      double* r = x.row(n + 2 + i);
      const double* mp = mproj.row(i);
      const double* pp = pproj.row(i);
      for (int j = 0; j < c; ++j) {
        r[j] = mp[j] + params.b_motion.a[j] + pp[j] + params.b_pose.a[j] +
               params.emb_face.a[j] + pe[j];
      }
    }
  }

  cc.layers.resize(params.layers.size());
  for (size_t l = 0; l < params.layers.size(); ++l) {
    encoder_layer_forward(params.layers[l], config, cc.layers[l], x);
  }

  cc.x_final = x;
  ln_forward(x, params.lnf_g, params.lnf_b, cc.f_norm, cc.xhatf, cc.rstdf);

  // keep the last N+1 tokens, project back to representation space
  const Mat f_slice = slice_rows(cc.f_norm, n + 1, s);
  Mat out;
  kern::matmul_nt(f_slice, params.w_out, out);
  kern::add_row_bias(out, params.b_out);
  return out;
}

void denoiser_backward(const Mat& grad_output, const DenoiserCache& cc,
                       const DenoiserConfig& config, const DenoiserParams& params,
                       DenoiserParams& grads, Mat* grad_audio) {
  const int n = cc.n_frames;
  const int c = config.latent_dim;
  const int v3 = 3 * config.n_vertices;
  const int s = 2 * n + 2;
  require(grad_output.rows == n + 1 && grad_output.cols == config.repr_cols(),
          "denoiser_backward: grad shape mismatch");

  // output projection
  const Mat f_slice = slice_rows(cc.f_norm, n + 1, s);
  add_matmul_tn(grad_output, f_slice, grads.w_out);
  colsum_into(grad_output, grads.b_out);
  Mat d_f_slice;
  kern::matmul_nn(grad_output, params.w_out, d_f_slice);
  Mat d_f(s, c);
  std::memcpy(d_f.row(n + 1), d_f_slice.a.data(), sizeof(double) * d_f_slice.a.size());

  Mat dx;
  ln_backward(d_f, cc.xhatf, cc.rstdf, params.lnf_g, dx, grads.lnf_g, grads.lnf_b);

  for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
    encoder_layer_backward(params.layers[l], grads.layers[l], config, cc.layers[l], dx);
  }

  // input embeddings; dx now holds token gradients
  {
    const double* d0 = dx.row(0);
    for (int i = 0; i < c; ++i) {
      grads.b_time.a[i] += d0[i];
      grads.emb_time.a[i] += d0[i];
      double* w = grads.w_time.row(i);
      for (int j = 0; j < c; ++j) w[j] += d0[i] * cc.time_embed[j];
    }
  }
  {
    const Mat d_audio_tok = slice_rows(dx, 1, n + 1);
    add_matmul_tn(d_audio_tok, cc.audio_in, grads.w_audio);
    colsum_into(d_audio_tok, grads.b_audio);
    colsum_into(d_audio_tok, grads.emb_audio);
    if (grad_audio) kern::matmul_nn(d_audio_tok, params.w_audio, *grad_audio);
  }
  {
    const double* di = dx.row(n + 1);
    const double* idv = cc.x_t_in.row(0);
    for (int i = 0; i < c; ++i) {
      grads.b_id.a[i] += di[i];
      grads.emb_id.a[i] += di[i];
      double* w = grads.w_id.row(i);
      for (int j = 0; j < v3; ++j) w[j] += di[i] * idv[j];
    }
  }
  {
    const Mat d_face_tok = slice_rows(dx, n + 2, s);
    const Mat motion = slice_cols(slice_rows(cc.x_t_in, 1, n + 1), 0, v3);
    const Mat pose = slice_cols(slice_rows(cc.x_t_in, 1, n + 1), v3, v3 + 3);
    add_matmul_tn(d_face_tok, motion, grads.w_motion);
    add_matmul_tn(d_face_tok, pose, grads.w_pose);
    colsum_into(d_face_tok, grads.b_motion);
    colsum_into(d_face_tok, grads.b_pose);
    colsum_into(d_face_tok, grads.emb_face);
  }
}

}  // namespace facediff
