#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <vector>

#include "framemae/audio.hpp"
#include "framemae/errors.hpp"
#include "framemae/frontend.hpp"
#include "framemae/model.hpp"
#include "framemae/objective.hpp"
#include "framemae/rng.hpp"
#include "framemae/rvq.hpp"

namespace framemae {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  int batch_size = 4;
  int steps_stage1 = 5000;
  int steps_stage2 = 1500;  // desk-scale 0.3x of stage 1
  int eval_every = 100;
  double crop_seconds = 4.0;
  double mask_proportion = 0.5;
  int mask_span = 15;
  double grad_clip = 0.0;  // 0 disables

  void validate() const {
    if (lr <= 0) throw ConfigError("trainer.lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("trainer betas must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
    if (weight_decay < 0) throw ConfigError("trainer.weight_decay must be >= 0");
    if (steps_stage1 < 0 || steps_stage2 < 0) throw ConfigError("step counts must be >= 0");
    if (eval_every < 1) throw ConfigError("trainer.eval_every must be >= 1");
  }
};

// AdamW with decoupled weight decay: the adaptive update and the decay term
// lr * wd * p are both taken from the pre-step parameter value.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(ModelParams& params, ModelParams& grads) {
    auto p_tensors = collect_tensors(params);
    auto g_tensors = collect_tensors(grads);
    if (m_.empty()) {
      for (const auto& [name, t] : p_tensors) {
        m_.push_back(Mat::Zero(t->rows(), t->cols()));
        v_.push_back(Mat::Zero(t->rows(), t->cols()));
      }
    }
    for (const auto& [name, g] : g_tensors)
      if (!g->allFinite()) throw NumericError("adamw: non-finite gradient in " + name);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < p_tensors.size(); ++i) {
      Mat& p = *p_tensors[i].second;
      const Mat& g = *g_tensors[i].second;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const Mat update = (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps) +
                         cfg_.weight_decay * p.array();
      p -= cfg_.lr * update;
      if (!p.allFinite())
        throw NumericError("adamw: non-finite parameter after step in " + p_tensors[i].first);
    }
  }

  int steps_taken() const { return t_; }
  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

 private:
  TrainConfig cfg_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

// Maps crop features to training targets: stage 1 tokenizes with the frozen
// RVQ cascade, stage 2 looks up k-means cluster IDs of frozen-model
// embeddings.
using TargetFn = std::function<TokenTargets(const Mat& features)>;

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  Eigen::VectorXd acc;
};

// Crop -> featurize -> tokenize -> mask -> encode/decode -> loss -> backward
// -> AdamW, with per-step randomness drawn from one caller-owned stream in a
// fixed order so runs are bitwise reproducible.
class Trainer {
 public:
  Trainer(Model model, LossConfig loss_cfg, TrainConfig train_cfg, FrontendConfig frontend_cfg,
          TargetFn target_fn, int sample_rate = 24000)
      : model_(std::move(model)),
        loss_cfg_(std::move(loss_cfg)),
        train_cfg_(train_cfg),
        frontend_cfg_(frontend_cfg),
        target_fn_(std::move(target_fn)),
        optimizer_(train_cfg),
        fb_(mel_filterbank(frontend_cfg.n_mels, frontend_cfg.win, sample_rate)) {
    train_cfg_.validate();
  }

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  AdamW& optimizer() { return optimizer_; }
  void set_metrics(std::ostream* out) { metrics_ = out; }

  // One optimizer step over a fresh batch; item gradients are summed in batch
  // order then averaged.
  TrainLogEntry step(const std::vector<AudioBuffer>& corpus, Rng& rng,
                     bool want_accuracy = false) {
    if (corpus.empty()) throw ConfigError("trainer: empty corpus");
    ModelParams grads = zeros_like(model_.params());
    double batch_loss = 0.0;
    Eigen::VectorXd acc =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model_.params().heads.size()));
    for (int b = 0; b < train_cfg_.batch_size; ++b) {
      const size_t idx = static_cast<size_t>(rng.uniform_int(corpus.size()));
      const BatchItem item = featurize(idx, corpus[idx], rng);
      const MaskSpec mask = sample_mask(static_cast<int>(item.features.rows()),
                                        train_cfg_.mask_proportion, train_cfg_.mask_span, rng);
      ForwardCache cache;
      const Mat x_e = model_.encode(item.features, mask, &cache);
      const std::vector<Mat> logits = model_.decode(x_e, mask, &cache);
      std::vector<Mat> dlogits;
      batch_loss += weighted_ce_from_logits(item.targets, logits, mask, loss_cfg_, &dlogits);
      model_.backward(dlogits, cache, grads);
      if (want_accuracy)
        acc += masked_accuracy(item.targets, posteriors_from_logits(logits), mask);
    }
    const double scale = 1.0 / train_cfg_.batch_size;
    for_each_tensor(grads, [&](const std::string&, Mat& g) { g *= scale; });
    if (train_cfg_.grad_clip > 0.0) clip_gradients(grads);
    optimizer_.step(model_.params(), grads);

    TrainLogEntry entry;
    entry.step = optimizer_.steps_taken();
    entry.loss = batch_loss * scale;
    entry.acc = acc * scale;
    return entry;
  }

  // Runs `steps` optimizer steps, logging `step,loss,acc_q0..` every
  // eval_every steps and on the final step.
  std::vector<TrainLogEntry> run(const std::vector<AudioBuffer>& corpus, int steps, Rng& rng) {
    std::vector<TrainLogEntry> log;
    for (int s = 0; s < steps; ++s) {
      const bool eval = (s % train_cfg_.eval_every == 0) || (s == steps - 1);
      TrainLogEntry entry = step(corpus, rng, eval);
      if (eval) {
        if (metrics_) {
          (*metrics_) << entry.step << "," << entry.loss;
          for (Eigen::Index q = 0; q < entry.acc.size(); ++q) (*metrics_) << "," << entry.acc(q);
          (*metrics_) << "\n";
        }
        log.push_back(entry);
      }
    }
    return log;
  }

  void clear_feature_cache() { cache_.clear(); }

 private:
  struct BatchItem {
    Mat features;
    TokenTargets targets;
  };

  // Clips no longer than the crop window always produce the same crop, so
  // their features and targets are computed once and cached.
  BatchItem featurize(size_t idx, const AudioBuffer& clip, Rng& rng) {
    const size_t want =
        static_cast<size_t>(std::llround(train_cfg_.crop_seconds * clip.sample_rate));
    const bool deterministic_crop = clip.size() <= want;
    if (deterministic_crop) {
      auto it = cache_.find(idx);
      if (it != cache_.end()) return it->second;
    }
    const AudioBuffer crop = random_crop(clip, train_cfg_.crop_seconds, rng);
    BatchItem item;
    item.features = melspectrogram(crop, frontend_cfg_, &fb_).data;
    item.targets = target_fn_(item.features);
    if (deterministic_crop) cache_[idx] = item;
    return item;
  }

  void clip_gradients(ModelParams& grads) {
    double sq = 0.0;
    for_each_tensor(grads, [&](const std::string&, Mat& g) { sq += g.squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (norm > train_cfg_.grad_clip) {
      const double s = train_cfg_.grad_clip / norm;
      for_each_tensor(grads, [&](const std::string&, Mat& g) { g *= s; });
    }
  }

  Model model_;
  LossConfig loss_cfg_;
  TrainConfig train_cfg_;
  FrontendConfig frontend_cfg_;
  TargetFn target_fn_;
  AdamW optimizer_;
  Mat fb_;
  std::ostream* metrics_ = nullptr;
  std::map<size_t, BatchItem> cache_;
};

}  // namespace framemae
