#pragma once

// Asymmetric masked-autoencoder transformer over frame features: input
// projection, sinusoidal positions added before masking, a larger encoder on
// visible frames only, a shared learned mask token, a smaller decoder over the
// re-expanded sequence, and one softmax classification head per codebook.
// Forward passes record activation caches; backward() produces exact
// reverse-mode gradients for every parameter tensor.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/masking.hpp"
#include "framemae/rng.hpp"
#include "framemae/tensor_store.hpp"

namespace framemae {

struct ModelConfig {
  int feat_dim = 128;
  int d_model = 64;
  int enc_layers = 4;
  int dec_layers = 2;
  int heads = 4;
  int ff_mult = 4;
  int num_codebooks = 8;  // classification heads
  int classes = 64;       // classes per head
  int max_len = 8192;

  int ff_dim() const { return d_model * ff_mult; }

  void validate() const {
    if (d_model < 1 || enc_layers < 1 || dec_layers < 1 || heads < 1 || ff_mult < 1 ||
        num_codebooks < 1 || classes < 2 || feat_dim < 1 || max_len < 1)
      throw ConfigError("model config fields must be positive (classes >= 2)");
    if (dec_layers >= enc_layers)
      throw ConfigError("decoder must have fewer layers than the encoder");
    if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  }
};

struct LinearParams {
  Mat w;  // in x out
  Mat b;  // 1 x out
};

struct NormParams {
  Mat gain;  // 1 x D
  Mat bias;  // 1 x D
};

struct AttentionParams {
  LinearParams q, k, v, out;
};

struct BlockParams {
  NormParams ln_pre_attn, ln_post_attn, ln_pre_ff, ln_post_ff;
  AttentionParams attn;
  LinearParams ff1, ff2;
};

struct ModelParams {
  LinearParams in_proj;
  std::vector<BlockParams> enc;
  std::vector<BlockParams> dec;
  Mat mask_token;  // 1 x D
  std::vector<LinearParams> heads;
};

namespace model_detail {

template <typename F>
void visit_linear(LinearParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".w", p.w);
  f(prefix + ".b", p.b);
}

template <typename F>
void visit_norm(NormParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".gain", p.gain);
  f(prefix + ".bias", p.bias);
}

template <typename F>
void visit_block(BlockParams& p, const std::string& prefix, F&& f) {
  visit_norm(p.ln_pre_attn, prefix + ".ln_pre_attn", f);
  visit_linear(p.attn.q, prefix + ".attn.q", f);
  visit_linear(p.attn.k, prefix + ".attn.k", f);
  visit_linear(p.attn.v, prefix + ".attn.v", f);
  visit_linear(p.attn.out, prefix + ".attn.out", f);
  visit_norm(p.ln_post_attn, prefix + ".ln_post_attn", f);
  visit_norm(p.ln_pre_ff, prefix + ".ln_pre_ff", f);
  visit_linear(p.ff1, prefix + ".ff1", f);
  visit_linear(p.ff2, prefix + ".ff2", f);
  visit_norm(p.ln_post_ff, prefix + ".ln_post_ff", f);
}

}  // namespace model_detail

// Visit every parameter tensor with a stable name; the visitation order is
// the canonical tensor order for checkpoints and optimizer state.
template <typename F>
void for_each_tensor(ModelParams& p, F&& f) {
  model_detail::visit_linear(p.in_proj, "in_proj", f);
  for (size_t i = 0; i < p.enc.size(); ++i)
    model_detail::visit_block(p.enc[i], "enc." + std::to_string(i), f);
  for (size_t i = 0; i < p.dec.size(); ++i)
    model_detail::visit_block(p.dec[i], "dec." + std::to_string(i), f);
  f(std::string("mask_token"), p.mask_token);
  for (size_t i = 0; i < p.heads.size(); ++i)
    model_detail::visit_linear(p.heads[i], "head." + std::to_string(i), f);
}

inline std::vector<std::pair<std::string, Mat*>> collect_tensors(ModelParams& p) {
  std::vector<std::pair<std::string, Mat*>> out;
  for_each_tensor(p, [&](const std::string& name, Mat& m) { out.emplace_back(name, &m); });
  return out;
}

namespace model_detail {

inline LinearParams make_linear(int in, int out) {
  LinearParams p;
  p.w = Mat::Zero(in, out);
  p.b = Mat::Zero(1, out);
  return p;
}

inline NormParams make_norm(int d) {
  NormParams p;
  p.gain = Mat::Zero(1, d);
  p.bias = Mat::Zero(1, d);
  return p;
}

inline BlockParams make_block(const ModelConfig& cfg) {
  BlockParams b;
  b.ln_pre_attn = make_norm(cfg.d_model);
  b.ln_post_attn = make_norm(cfg.d_model);
  b.ln_pre_ff = make_norm(cfg.d_model);
  b.ln_post_ff = make_norm(cfg.d_model);
  b.attn.q = make_linear(cfg.d_model, cfg.d_model);
  b.attn.k = make_linear(cfg.d_model, cfg.d_model);
  b.attn.v = make_linear(cfg.d_model, cfg.d_model);
  b.attn.out = make_linear(cfg.d_model, cfg.d_model);
  b.ff1 = make_linear(cfg.d_model, cfg.ff_dim());
  b.ff2 = make_linear(cfg.ff_dim(), cfg.d_model);
  return b;
}

}  // namespace model_detail

inline ModelParams make_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.in_proj = model_detail::make_linear(cfg.feat_dim, cfg.d_model);
  for (int i = 0; i < cfg.enc_layers; ++i) p.enc.push_back(model_detail::make_block(cfg));
  for (int i = 0; i < cfg.dec_layers; ++i) p.dec.push_back(model_detail::make_block(cfg));
  p.mask_token = Mat::Zero(1, cfg.d_model);
  for (int i = 0; i < cfg.num_codebooks; ++i)
    p.heads.push_back(model_detail::make_linear(cfg.d_model, cfg.classes));
  return p;
}

// Scaled-normal weights (std 0.02), zero biases, unit norm gains.
inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  ModelParams p = make_params(cfg);
  for_each_tensor(p, [&](const std::string& name, Mat& m) {
    if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0) {
      m.setOnes();
    } else if ((name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) ||
               (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0)) {
      m.setZero();
    } else {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = 0.02 * rng.normal();
    }
  });
  return p;
}

inline ModelParams zeros_like(const ModelParams& src) {
  ModelParams p = src;
  for_each_tensor(p, [](const std::string&, Mat& m) { m.setZero(); });
  return p;
}

// Standard sinusoid table: pe[t, 2i] = sin(t / 10000^(2i/D)), pe[t, 2i+1] = cos.
inline Mat positional_embeddings(Eigen::Index T, int D) {
  Mat pe(T, D);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int i = 0; i < D; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / D);
      const double angle = static_cast<double>(t) / rate;
      pe(t, i) = std::sin(angle);
      if (i + 1 < D) pe(t, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// --- forward/backward primitives -------------------------------------------

struct LinearCache {
  Mat x;
};

inline Mat linear_forward(const Mat& x, const LinearParams& p, LinearCache* cache = nullptr) {
  if (x.cols() != p.w.rows()) throw ShapeError("linear: input dim mismatch");
  if (cache) cache->x = x;
  Mat y = x * p.w;
  y.rowwise() += p.b.row(0);
  return y;
}

inline Mat linear_backward(const Mat& dy, const LinearParams& p, const LinearCache& cache,
                           LinearParams& grad) {
  grad.w.noalias() += cache.x.transpose() * dy;
  grad.b.row(0) += dy.colwise().sum();
  return dy * p.w.transpose();
}

constexpr double kLayerNormEpsilon = 1e-5;

struct NormCache {
  Mat xhat;
  Eigen::VectorXd invstd;
};

inline Mat layernorm_forward(const Mat& x, const NormParams& p, NormCache* cache) {
  const Eigen::Index D = x.cols();
  Mat xhat(x.rows(), D);
  Eigen::VectorXd invstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    xhat.row(r) = (x.row(r).array() - mu) * is;
    invstd(r) = is;
  }
  Mat y = (xhat.array().rowwise() * p.gain.row(0).array()).matrix();
  y.rowwise() += p.bias.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->invstd = std::move(invstd);
  }
  return y;
}

inline Mat layernorm_backward(const Mat& dy, const NormParams& p, const NormCache& cache,
                              NormParams& grad) {
  const Eigen::Index D = dy.cols();
  grad.gain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  grad.bias.row(0) += dy.colwise().sum();
  Mat dxhat = (dy.array().rowwise() * p.gain.row(0).array()).matrix();
  Mat dx(dy.rows(), D);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double s1 = dxhat.row(r).sum() / static_cast<double>(D);
    const double s2 =
        (dxhat.row(r).array() * cache.xhat.row(r).array()).sum() / static_cast<double>(D);
    dx.row(r) =
        cache.invstd(r) * (dxhat.row(r).array() - s1 - cache.xhat.row(r).array() * s2).matrix();
  }
  return dx;
}

inline Mat gelu_forward(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
}

inline Mat gelu_backward(const Mat& dy, const Mat& x) {
  return dy.binaryExpr(x, [](double g, double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
    return g * (cdf + v * pdf);
  });
}

struct AttnCache {
  LinearCache qkv_in;  // shared input of the q/k/v projections
  Mat q, k, v;
  std::vector<Mat> attn;  // per-head softmax, T x T
  LinearCache out_in;
};

inline Mat attention_forward(const Mat& x, const AttentionParams& p, int heads,
                             AttnCache* cache) {
  const Eigen::Index D = x.cols();
  const Eigen::Index dk = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  AttnCache local;
  AttnCache& c = cache ? *cache : local;
  c.qkv_in.x = x;
  c.q = linear_forward(x, p.q);
  c.k = linear_forward(x, p.k);
  c.v = linear_forward(x, p.v);
  c.attn.assign(static_cast<size_t>(heads), Mat());
  Mat concat(x.rows(), D);
  for (int h = 0; h < heads; ++h) {
    const auto qh = c.q.middleCols(h * dk, dk);
    const auto kh = c.k.middleCols(h * dk, dk);
    const auto vh = c.v.middleCols(h * dk, dk);
    Mat scores = (qh * kh.transpose()) * scale;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const double mx = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - mx).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    concat.middleCols(h * dk, dk).noalias() = scores * vh;
    c.attn[static_cast<size_t>(h)] = std::move(scores);
  }
  c.out_in.x = concat;
  return linear_forward(concat, p.out);
}

inline Mat attention_backward(const Mat& dy, const AttentionParams& p, int heads,
                              const AttnCache& c, AttentionParams& grad) {
  const Eigen::Index D = dy.cols();
  const Eigen::Index dk = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Mat dconcat = linear_backward(dy, p.out, c.out_in, grad.out);
  Mat dq = Mat::Zero(dy.rows(), D), dkm = Mat::Zero(dy.rows(), D), dv = Mat::Zero(dy.rows(), D);
  for (int h = 0; h < heads; ++h) {
    const auto qh = c.q.middleCols(h * dk, dk);
    const auto kh = c.k.middleCols(h * dk, dk);
    const auto vh = c.v.middleCols(h * dk, dk);
    const Mat& a = c.attn[static_cast<size_t>(h)];
    const auto doh = dconcat.middleCols(h * dk, dk);
    dv.middleCols(h * dk, dk).noalias() = a.transpose() * doh;
    Mat da = doh * vh.transpose();
    // softmax backward, row-wise
    Mat ds(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double dot = (da.row(r).array() * a.row(r).array()).sum();
      ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
    }
    ds *= scale;
    dq.middleCols(h * dk, dk).noalias() = ds * kh;
    dkm.middleCols(h * dk, dk).noalias() = ds.transpose() * qh;
  }
  Mat dx = linear_backward(dq, p.q, c.qkv_in, grad.q);
  dx += linear_backward(dkm, p.k, c.qkv_in, grad.k);
  dx += linear_backward(dv, p.v, c.qkv_in, grad.v);
  return dx;
}

struct BlockCache {
  NormCache pre_attn, post_attn, pre_ff, post_ff;
  AttnCache attn;
  LinearCache ff1_in;
  Mat ff_pre_act;
  LinearCache ff2_in;
};

// Pre-post layer normalization: LN before each sublayer and LN after the
// residual addition.
inline Mat block_forward(const Mat& x, const BlockParams& p, int heads, BlockCache* cache) {
  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  const Mat a = layernorm_forward(x, p.ln_pre_attn, &c.pre_attn);
  const Mat b = attention_forward(a, p.attn, heads, &c.attn);
  const Mat d = layernorm_forward(x + b, p.ln_post_attn, &c.post_attn);
  const Mat e = layernorm_forward(d, p.ln_pre_ff, &c.pre_ff);
  c.ff1_in.x = e;
  c.ff_pre_act = linear_forward(e, p.ff1, nullptr);
  c.ff2_in.x = gelu_forward(c.ff_pre_act);
  const Mat f = linear_forward(c.ff2_in.x, p.ff2);
  return layernorm_forward(d + f, p.ln_post_ff, &c.post_ff);
}

inline Mat block_backward(const Mat& dy, const BlockParams& p, int heads, const BlockCache& c,
                          BlockParams& grad) {
  const Mat dg = layernorm_backward(dy, p.ln_post_ff, c.post_ff, grad.ln_post_ff);
  Mat dd = dg;
  const Mat da2 = linear_backward(dg, p.ff2, c.ff2_in, grad.ff2);
  const Mat dh = gelu_backward(da2, c.ff_pre_act);
  const Mat de = linear_backward(dh, p.ff1, c.ff1_in, grad.ff1);
  dd += layernorm_backward(de, p.ln_pre_ff, c.pre_ff, grad.ln_pre_ff);
  const Mat dc = layernorm_backward(dd, p.ln_post_attn, c.post_attn, grad.ln_post_attn);
  Mat dx = dc;
  const Mat da = attention_backward(dc, p.attn, heads, c.attn, grad.attn);
  dx += layernorm_backward(da, p.ln_pre_attn, c.pre_attn, grad.ln_pre_attn);
  return dx;
}

// --- full model -------------------------------------------------------------

struct ForwardCache {
  LinearCache in_proj;
  std::vector<BlockCache> enc;
  std::vector<BlockCache> dec;
  LinearCache head_in;  // decoder output, shared by all heads
  MaskSpec mask;
};

class Model {
 public:
  Model(ModelConfig cfg, ModelParams params) : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
  }
  Model(const ModelConfig& cfg, Rng& rng) : cfg_(cfg), params_(init_params(cfg, rng)) {}

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // X_f -> X_e: project, add positions for the full length, drop masked rows,
  // run the encoder stack. Output has one row per visible frame.
  Mat encode(const Mat& x_f, const MaskSpec& mask, ForwardCache* cache = nullptr) const {
    if (x_f.rows() != mask.total) throw ShapeError("encode: feature rows != mask total");
    if (x_f.rows() > cfg_.max_len) throw ShapeError("encode: sequence exceeds max_len");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.mask = mask;
    Mat h = linear_forward(x_f, params_.in_proj, &c.in_proj);
    h += positional_embeddings(h.rows(), cfg_.d_model);
    h = gather_visible(h, mask);
    c.enc.resize(params_.enc.size());
    for (size_t i = 0; i < params_.enc.size(); ++i) {
      h = block_forward(h, params_.enc[i], cfg_.heads, cache ? &c.enc[i] : nullptr);
      if (!h.allFinite())
        throw NumericError("encode: non-finite activation after encoder layer " +
                           std::to_string(i));
    }
    return h;
  }

  // X_e -> per-codebook logits: scatter with the shared mask token, add
  // positions, run the decoder stack and the classification heads.
  std::vector<Mat> decode(const Mat& x_e, const MaskSpec& mask,
                          ForwardCache* cache = nullptr) const {
    if (x_e.rows() != static_cast<Eigen::Index>(mask.visible.size()))
      throw ShapeError("decode: encoder rows != visible count");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    Mat h = scatter_with_mask_tokens(x_e, mask, params_.mask_token.row(0));
    h += positional_embeddings(h.rows(), cfg_.d_model);
    c.dec.resize(params_.dec.size());
    for (size_t i = 0; i < params_.dec.size(); ++i) {
      h = block_forward(h, params_.dec[i], cfg_.heads, cache ? &c.dec[i] : nullptr);
      if (!h.allFinite())
        throw NumericError("decode: non-finite activation after decoder layer " +
                           std::to_string(i));
    }
    c.head_in.x = h;
    std::vector<Mat> logits;
    logits.reserve(params_.heads.size());
    for (const auto& head : params_.heads) logits.push_back(linear_forward(h, head));
    return logits;
  }

  // Reverse pass through heads, decoder, scatter, encoder, gather and input
  // projection; accumulates into grads (caller zeroes).
  void backward(const std::vector<Mat>& dlogits, const ForwardCache& cache,
                ModelParams& grads) const {
    if (dlogits.size() != params_.heads.size())
      throw ShapeError("backward: head gradient count mismatch");
    Mat dh = Mat::Zero(cache.head_in.x.rows(), cfg_.d_model);
    for (size_t q = 0; q < params_.heads.size(); ++q)
      dh += linear_backward(dlogits[q], params_.heads[q], cache.head_in, grads.heads[q]);
    for (size_t i = params_.dec.size(); i-- > 0;)
      dh = block_backward(dh, params_.dec[i], cfg_.heads, cache.dec[i], grads.dec[i]);
    // positional add has no parameters; split the scatter
    const MaskSpec& m = cache.mask;
    Mat dxe(static_cast<Eigen::Index>(m.visible.size()), cfg_.d_model);
    for (size_t i = 0; i < m.visible.size(); ++i)
      dxe.row(static_cast<Eigen::Index>(i)) = dh.row(m.visible[i]);
    for (int i : m.masked) grads.mask_token.row(0) += dh.row(i);
    for (size_t i = params_.enc.size(); i-- > 0;)
      dxe = block_backward(dxe, params_.enc[i], cfg_.heads, cache.enc[i], grads.enc[i]);
    // gather backward: masked rows were dropped, their gradient is zero
    Mat dh0 = Mat::Zero(m.total, cfg_.d_model);
    for (size_t i = 0; i < m.visible.size(); ++i)
      dh0.row(m.visible[i]) = dxe.row(static_cast<Eigen::Index>(i));
    linear_backward(dh0, params_.in_proj, cache.in_proj, grads.in_proj);
  }

  // Last-encoder-layer activations under the empty mask.
  Mat extract_embeddings(const Mat& x_f) const {
    return encode(x_f, MaskSpec::empty(static_cast<int>(x_f.rows())));
  }

 private:
  ModelConfig cfg_;
  ModelParams params_;
};

// --- checkpoints ------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const ModelParams& params) {
  TensorStore store;
  store.set_meta("kind", "checkpoint");
  store.set_meta("feat_dim", std::to_string(cfg.feat_dim));
  store.set_meta("d_model", std::to_string(cfg.d_model));
  store.set_meta("enc_layers", std::to_string(cfg.enc_layers));
  store.set_meta("dec_layers", std::to_string(cfg.dec_layers));
  store.set_meta("heads", std::to_string(cfg.heads));
  store.set_meta("ff_mult", std::to_string(cfg.ff_mult));
  store.set_meta("num_codebooks", std::to_string(cfg.num_codebooks));
  store.set_meta("classes", std::to_string(cfg.classes));
  store.set_meta("max_len", std::to_string(cfg.max_len));
  ModelParams& mut = const_cast<ModelParams&>(params);
  for_each_tensor(mut, [&](const std::string& name, Mat& m) { store.put(name, m); });
  store.save(path);
}

inline std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path) {
  TensorStore store = TensorStore::load(path);
  ModelConfig cfg;
  cfg.feat_dim = std::stoi(store.meta("feat_dim"));
  cfg.d_model = std::stoi(store.meta("d_model"));
  cfg.enc_layers = std::stoi(store.meta("enc_layers"));
  cfg.dec_layers = std::stoi(store.meta("dec_layers"));
  cfg.heads = std::stoi(store.meta("heads"));
  cfg.ff_mult = std::stoi(store.meta("ff_mult"));
  cfg.num_codebooks = std::stoi(store.meta("num_codebooks"));
  cfg.classes = std::stoi(store.meta("classes"));
  cfg.max_len = std::stoi(store.meta("max_len"));
  ModelParams params = make_params(cfg);
  for_each_tensor(params, [&](const std::string& name, Mat& m) {
    const Mat& loaded = store.get_f64(name);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
      throw ShapeError("checkpoint tensor shape mismatch: " + name);
    m = loaded;
  });
  return {cfg, std::move(params)};
}

}  // namespace framemae
