#pragma once

// Stage-2 target refinement: fit k-means on last-encoder-layer embeddings of
// a corpus sample, then continue training against the cluster IDs with a
// fresh single k-way head.

#include <Eigen/Dense>
#include <vector>

#include "framemae/audio.hpp"
#include "framemae/errors.hpp"
#include "framemae/frontend.hpp"
#include "framemae/kmeans.hpp"
#include "framemae/model.hpp"
#include "framemae/rng.hpp"
#include "framemae/trainer.hpp"

namespace framemae {

// Fit k-means on embeddings extracted (with the frozen checkpoint) from a
// random corpus sample of fixed-length crops.
inline KMeansModel fit_embedding_kmeans(const Model& frozen,
                                        const std::vector<AudioBuffer>& corpus, int sample_size,
                                        int k, const FrontendConfig& frontend_cfg,
                                        double crop_seconds, Rng& rng) {
  if (corpus.empty()) throw ConfigError("selftrain: empty corpus");
  const int n = std::min<int>(sample_size, static_cast<int>(corpus.size()));
  const std::vector<int> picks =
      rng.sample_without_replacement(static_cast<int>(corpus.size()), n);
  const Mat fb = mel_filterbank(frontend_cfg.n_mels, frontend_cfg.win,
                                corpus.front().sample_rate);
  std::vector<Mat> chunks;
  Eigen::Index total = 0;
  for (int idx : picks) {
    const AudioBuffer crop = random_crop(corpus[static_cast<size_t>(idx)], crop_seconds, rng);
    const Mat feats = melspectrogram(crop, frontend_cfg, &fb).data;
    chunks.push_back(frozen.extract_embeddings(feats));
    total += chunks.back().rows();
  }
  Mat points(total, frozen.config().d_model);
  Eigen::Index row = 0;
  for (const Mat& c : chunks) {
    points.middleRows(row, c.rows()) = c;
    row += c.rows();
  }
  return kmeans_fit(points, k, rng);
}

// Target provider for stage 2: features -> frozen embeddings -> cluster IDs,
// as a 1 x T target matrix with K_cb = k.
inline TargetFn make_selftrain_target_fn(Model frozen, KMeansModel km) {
  return [frozen = std::move(frozen), km = std::move(km)](const Mat& features) {
    const Mat emb = frozen.extract_embeddings(features);
    const std::vector<int> labels = kmeans_assign(km, emb);
    TokenTargets t;
    t.indices.resize(1, emb.rows());
    for (Eigen::Index i = 0; i < emb.rows(); ++i)
      t.indices(0, i) = labels[static_cast<size_t>(i)];
    return t;
  };
}

struct SelftrainSetup {
  KMeansModel kmeans;
  Model model;       // stage-1 weights with a fresh single k-way head
  TargetFn targets;  // cluster-ID provider backed by the frozen stage-1 model
};

// Carry over encoder/decoder/projection/mask-token weights, replace the RVQ
// heads with one reinitialized k-way head.
inline SelftrainSetup build_selftrain_stage(const Model& stage1,
                                            const std::vector<AudioBuffer>& corpus,
                                            int sample_size, int k,
                                            const FrontendConfig& frontend_cfg,
                                            double crop_seconds, Rng& rng) {
  SelftrainSetup setup{
      fit_embedding_kmeans(stage1, corpus, sample_size, k, frontend_cfg, crop_seconds, rng),
      stage1, TargetFn{}};
  ModelConfig cfg2 = stage1.config();
  cfg2.num_codebooks = 1;
  cfg2.classes = k;
  ModelParams params2 = make_params(cfg2);
  params2.in_proj = stage1.params().in_proj;
  params2.enc = stage1.params().enc;
  params2.dec = stage1.params().dec;
  params2.mask_token = stage1.params().mask_token;
  for (Eigen::Index r = 0; r < params2.heads[0].w.rows(); ++r)
    for (Eigen::Index c = 0; c < params2.heads[0].w.cols(); ++c)
      params2.heads[0].w(r, c) = 0.02 * rng.normal();
  params2.heads[0].b.setZero();
  setup.model = Model(cfg2, std::move(params2));
  setup.targets = make_selftrain_target_fn(stage1, setup.kmeans);
  return setup;
}

inline void save_kmeans(const std::string& path, const KMeansModel& m) {
  TensorStore store;
  store.set_meta("kind", "kmeans");
  store.set_meta("k", std::to_string(m.k));
  store.put("centroids", m.centroids);
  store.save(path);
}

inline KMeansModel load_kmeans(const std::string& path) {
  TensorStore store = TensorStore::load(path);
  KMeansModel m;
  m.centroids = store.get_f64("centroids");
  m.k = static_cast<int>(m.centroids.rows());
  return m;
}

}  // namespace framemae
