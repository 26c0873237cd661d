#pragma once

// In-process implementations of the CLI verbs; the binary in tools/ is a thin
// argument-parsing wrapper so integration tests can drive these directly.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "framemae/audio.hpp"
#include "framemae/config.hpp"
#include "framemae/frontend.hpp"
#include "framemae/model.hpp"
#include "framemae/objective.hpp"
#include "framemae/probe.hpp"
#include "framemae/rvq.hpp"
#include "framemae/selftrain.hpp"
#include "framemae/synth.hpp"
#include "framemae/tensor_store.hpp"
#include "framemae/trainer.hpp"

namespace framemae {

// --- corpus -----------------------------------------------------------------

inline std::vector<LabeledAudio> load_corpus(const RunConfig& cfg) {
  if (cfg.data.dir.empty()) {
    Rng rng(cfg.seed ^ 0x5f3759df);
    return synth_dataset(cfg.data.synth, rng);
  }
  namespace fs = std::filesystem;
  const fs::path dir(cfg.data.dir);
  if (!fs::is_directory(dir)) throw ConfigError("data.dir is not a directory: " + cfg.data.dir);
  const fs::path labels_path = dir / "labels.csv";
  std::ifstream labels_in(labels_path);
  if (!labels_in) throw ConfigError("missing labels file: " + labels_path.string());
  std::vector<LabeledAudio> corpus;
  std::string line;
  while (std::getline(labels_in, line)) {
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("malformed labels.csv line: " + line);
    LabeledAudio item;
    item.label = std::stoi(line.substr(comma + 1));
    item.audio = load_wav((dir / line.substr(0, comma)).string());
    if (item.audio.sample_rate != cfg.data.synth.sample_rate)
      item.audio = resample(item.audio, cfg.data.synth.sample_rate);
    corpus.push_back(std::move(item));
  }
  if (corpus.empty()) throw ConfigError("empty corpus in " + cfg.data.dir);
  return corpus;
}

inline std::vector<AudioBuffer> audio_only(const std::vector<LabeledAudio>& corpus) {
  std::vector<AudioBuffer> out;
  out.reserve(corpus.size());
  for (const auto& item : corpus) out.push_back(item.audio);
  return out;
}

// --- tokenizer artifact -----------------------------------------------------

struct TokenizerArtifact {
  std::vector<Codebook> books;
  CodebookWeights gamma;
};

inline void save_tokenizer(const std::string& path, const TokenizerArtifact& tok) {
  TensorStore store;
  store.set_meta("kind", "tokenizer");
  store.set_meta("q", std::to_string(tok.books.size()));
  store.set_meta("K_cb", std::to_string(tok.books.empty() ? 0 : tok.books[0].entries.rows()));
  store.set_meta("F", std::to_string(tok.books.empty() ? 0 : tok.books[0].entries.cols()));
  for (size_t q = 0; q < tok.books.size(); ++q)
    store.put("codebook." + std::to_string(q), tok.books[q].entries);
  store.put("gamma", Mat(tok.gamma.gamma));
  store.save(path);
}

inline TokenizerArtifact load_tokenizer(const std::string& path) {
  TensorStore store = TensorStore::load(path);
  TokenizerArtifact tok;
  const int q = std::stoi(store.meta("q"));
  for (int i = 0; i < q; ++i) {
    Codebook book;
    book.entries = store.get_f64("codebook." + std::to_string(i));
    book.stage = i;
    tok.books.push_back(std::move(book));
  }
  tok.gamma.gamma = store.get_f64("gamma");
  return tok;
}

// --- feature helpers --------------------------------------------------------

inline std::vector<Mat> corpus_features(const std::vector<LabeledAudio>& corpus,
                                        const RunConfig& cfg) {
  const Mat fb =
      mel_filterbank(cfg.frontend.n_mels, cfg.frontend.win, cfg.data.synth.sample_rate);
  std::vector<Mat> feats;
  feats.reserve(corpus.size());
  for (const auto& item : corpus) {
    AudioBuffer clip = item.audio;
    // cap feature extraction at the crop length to bound tokenizer cost
    const size_t want = static_cast<size_t>(
        std::llround(cfg.trainer.crop_seconds * clip.sample_rate));
    if (clip.size() > want) clip.samples.resize(want);
    feats.push_back(melspectrogram(clip, cfg.frontend, &fb).data);
  }
  return feats;
}

// Embeddings for one clip: chunk to the crop length, extract per chunk,
// concatenate, trim trailing pad frames to floor(T_a / hop) total.
inline Mat clip_embeddings(const Model& model, const AudioBuffer& clip, const RunConfig& cfg,
                           const Mat& fb) {
  const auto chunks = chunk_for_inference(clip, cfg.trainer.crop_seconds);
  std::vector<Mat> embs;
  Eigen::Index total = 0;
  for (const auto& chunk : chunks) {
    const Mat feats = melspectrogram(chunk, cfg.frontend, &fb).data;
    embs.push_back(model.extract_embeddings(feats));
    total += embs.back().rows();
  }
  Mat out(total, model.config().d_model);
  Eigen::Index row = 0;
  for (const Mat& e : embs) {
    out.middleRows(row, e.rows()) = e;
    row += e.rows();
  }
  const Eigen::Index true_frames =
      static_cast<Eigen::Index>(clip.size()) / cfg.frontend.hop;
  return out.topRows(std::min(total, true_frames));
}

// --- commands ---------------------------------------------------------------

inline void cmd_synth_data(const RunConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Rng rng(cfg.seed ^ 0x5f3759df);
  const auto corpus = synth_dataset(cfg.data.synth, rng);
  std::ofstream labels(fs::path(out_dir) / "labels.csv");
  for (size_t i = 0; i < corpus.size(); ++i) {
    std::ostringstream name;
    name << "item_" << std::setw(5) << std::setfill('0') << i << ".wav";
    save_wav_pcm16((fs::path(out_dir) / name.str()).string(), corpus[i].audio);
    labels << name.str() << "," << corpus[i].label << "\n";
  }
  std::cout << "wrote " << corpus.size() << " clips to " << out_dir << "\n";
}

inline void cmd_train_tokenizer(const RunConfig& cfg, const std::string& out_path) {
  const auto corpus = load_corpus(cfg);
  const auto feats = corpus_features(corpus, cfg);
  Rng rng(cfg.seed ^ 0xa5a5a5a5);

  // Subsample frames to bound the k-means cost.
  Eigen::Index total = 0;
  for (const auto& f : feats) total += f.rows();
  Mat all(total, feats.front().cols());
  Eigen::Index row = 0;
  for (const auto& f : feats) {
    all.middleRows(row, f.rows()) = f;
    row += f.rows();
  }
  std::vector<Mat> train_frames;
  if (total > cfg.rvq.max_train_frames) {
    const auto picks = rng.sample_without_replacement(static_cast<int>(total),
                                                      cfg.rvq.max_train_frames);
    Mat sub(cfg.rvq.max_train_frames, all.cols());
    for (int i = 0; i < cfg.rvq.max_train_frames; ++i)
      sub.row(i) = all.row(picks[static_cast<size_t>(i)]);
    train_frames.push_back(std::move(sub));
  } else {
    train_frames.push_back(all);
  }

  TokenizerArtifact tok;
  tok.books = train_codebooks(train_frames, cfg.rvq.num_codebooks, cfg.rvq.codebook_size, rng,
                              cfg.rvq.kmeans_iters);

  std::vector<Mat> gamma_sample;
  const auto picks = rng.sample_without_replacement(
      static_cast<int>(feats.size()),
      std::min<int>(cfg.rvq.gamma_sample, static_cast<int>(feats.size())));
  for (int idx : picks) gamma_sample.push_back(feats[static_cast<size_t>(idx)]);
  tok.gamma = compute_gamma(tok.books, gamma_sample);

  save_tokenizer(out_path, tok);
  const Eigen::VectorXd energy = rvq_encode(feats.front(), tok.books).residual_energy;
  std::cout << "tokenizer: Q=" << tok.books.size() << " K_cb=" << cfg.rvq.codebook_size << "\n";
  for (Eigen::Index q = 0; q < energy.size(); ++q)
    std::cout << "  stage " << q << ": residual_energy=" << energy(q)
              << " gamma=" << tok.gamma.gamma(q) << "\n";
}

inline TargetFn make_rvq_target_fn(std::vector<Codebook> books) {
  return [books = std::move(books)](const Mat& features) {
    return rvq_encode(features, books).targets;
  };
}

inline std::vector<TrainLogEntry> cmd_pretrain(const RunConfig& cfg,
                                               const std::string& tokenizer_path,
                                               const std::string& out_ckpt,
                                               const std::string& metrics_path = "") {
  const auto corpus = audio_only(load_corpus(cfg));
  TokenizerArtifact tok = load_tokenizer(tokenizer_path);
  if (static_cast<int>(tok.books.size()) != cfg.model.num_codebooks)
    throw ShapeError("tokenizer codebook count does not match model heads: codebook.0");

  LossConfig loss_cfg = cfg.loss;
  loss_cfg.gamma = tok.gamma.gamma;
  Rng rng(cfg.seed);
  Model model(cfg.model, rng);
  Trainer trainer(std::move(model), loss_cfg, cfg.trainer, cfg.frontend,
                  make_rvq_target_fn(std::move(tok.books)), cfg.data.synth.sample_rate);
  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path);
    trainer.set_metrics(&metrics);
  }
  const auto log = trainer.run(corpus, cfg.trainer.steps_stage1, rng);
  save_checkpoint(out_ckpt, trainer.model().config(), trainer.model().params());
  return log;
}

inline std::vector<TrainLogEntry> cmd_selftrain(const RunConfig& cfg,
                                                const std::string& ckpt_path,
                                                const std::string& out_ckpt,
                                                const std::string& kmeans_out = "",
                                                const std::string& metrics_path = "") {
  const auto corpus = audio_only(load_corpus(cfg));
  auto [mcfg, params] = load_checkpoint(ckpt_path);
  Model stage1(mcfg, std::move(params));
  Rng rng(cfg.seed + 1);
  SelftrainSetup setup =
      build_selftrain_stage(stage1, corpus, cfg.selftrain.sample_size, cfg.selftrain.k,
                            cfg.frontend, cfg.trainer.crop_seconds, rng);
  if (!kmeans_out.empty()) save_kmeans(kmeans_out, setup.kmeans);

  LossConfig loss_cfg = cfg.loss;
  loss_cfg.gamma = Eigen::VectorXd::Ones(1);
  Trainer trainer(std::move(setup.model), loss_cfg, cfg.trainer, cfg.frontend, setup.targets,
                  cfg.data.synth.sample_rate);
  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path);
    trainer.set_metrics(&metrics);
  }
  const auto log = trainer.run(corpus, cfg.trainer.steps_stage2, rng);
  save_checkpoint(out_ckpt, trainer.model().config(), trainer.model().params());
  return log;
}

inline void cmd_extract(const RunConfig& cfg, const std::string& ckpt_path,
                        const std::string& wav_path, const std::string& out_path) {
  auto [mcfg, params] = load_checkpoint(ckpt_path);
  Model model(mcfg, std::move(params));
  AudioBuffer clip = load_wav(wav_path);
  if (clip.sample_rate != cfg.data.synth.sample_rate)
    clip = resample(clip, cfg.data.synth.sample_rate);
  const Mat fb = mel_filterbank(cfg.frontend.n_mels, cfg.frontend.win, clip.sample_rate);
  const Mat emb = clip_embeddings(model, clip, cfg, fb);
  TensorStore store;
  store.set_meta("kind", "embeddings");
  store.set_meta("frame_rate",
                 std::to_string(cfg.data.synth.sample_rate / cfg.frontend.hop));
  store.put("embeddings", emb);
  store.save(out_path);
  std::cout << "wrote " << emb.rows() << " x " << emb.cols() << " embeddings to " << out_path
            << "\n";
}

inline ProbeReport cmd_probe(const RunConfig& cfg, const std::string& ckpt_path,
                             const std::string& report_path) {
  const auto corpus = load_corpus(cfg);
  const std::string task = cfg.data.synth.generator;
  if (!cfg.probe.norm_stats.count(task))
    throw ConfigError("probe: missing norm_stats for task " + task);

  auto [mcfg, params] = load_checkpoint(ckpt_path);
  Model model(mcfg, std::move(params));
  const Mat fb =
      mel_filterbank(cfg.frontend.n_mels, cfg.frontend.win, cfg.data.synth.sample_rate);

  Mat pooled(static_cast<Eigen::Index>(corpus.size()), mcfg.d_model);
  std::vector<int> labels(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    pooled.row(static_cast<Eigen::Index>(i)) =
        pool_mean(clip_embeddings(model, corpus[i].audio, cfg, fb));
    labels[i] = corpus[i].label;
  }

  Rng rng(cfg.seed ^ 0x9e3779b9);
  const int n = static_cast<int>(corpus.size());
  const std::vector<int> perm = rng.sample_without_replacement(n, n);
  const int n_train = std::max(1, static_cast<int>(cfg.probe.train_fraction * n));
  const int n_val = std::max(1, static_cast<int>(cfg.probe.val_fraction * n));
  if (n_train + n_val >= n) throw ConfigError("probe: split leaves no test items");
  auto subset = [&](int lo, int hi) {
    Mat x(hi - lo, pooled.cols());
    std::vector<int> y(static_cast<size_t>(hi - lo));
    for (int i = lo; i < hi; ++i) {
      x.row(i - lo) = pooled.row(perm[static_cast<size_t>(i)]);
      y[static_cast<size_t>(i - lo)] = labels[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    return std::make_pair(x, y);
  };
  const auto [train_x, train_y] = subset(0, n_train);
  const auto [val_x, val_y] = subset(n_train, n_train + n_val);
  const auto [test_x, test_y] = subset(n_train + n_val, n);

  const int classes = cfg.data.synth.classes;
  TrainedProbe probe = train_probe(train_x, train_y, val_x, val_y, classes,
                                   default_probe_grid(), rng, cfg.probe.epochs);
  const std::vector<int> pred = probe.model.predict_class(test_x);
  std::vector<double> outcomes(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) outcomes[i] = pred[i] == test_y[i] ? 1.0 : 0.0;
  auto mean_fn = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  Rng boot_rng = rng.fork();
  const BootstrapResult ci = bootstrap_ci(outcomes, mean_fn, cfg.probe.bootstrap_iters, boot_rng);

  ProbeReport report;
  report.task = task;
  report.metric_name = "accuracy";
  report.metric = ci.metric;
  report.ci_low = ci.low;
  report.ci_high = ci.high;
  report.deviation = ci.deviation;
  report.global_contrib =
      global_score({{task, ci.metric}}, {{task, cfg.probe.norm_stats.at(task)}});

  nlohmann::json out{{"task", report.task},
                     {"metric_name", report.metric_name},
                     {"metric", report.metric},
                     {"ci_low", report.ci_low},
                     {"ci_high", report.ci_high},
                     {"deviation", report.deviation},
                     {"global_contrib", report.global_contrib},
                     {"val_score", probe.val_score},
                     {"grid_hidden", probe.chosen.hidden},
                     {"grid_lr", probe.chosen.lr},
                     {"grid_dropout", probe.chosen.dropout}};
  if (!report_path.empty()) {
    std::ofstream rf(report_path);
    rf << out.dump(2) << "\n";
  }
  std::cout << "task        metric    value    ci_low   ci_high  deviation  global\n"
            << std::left << std::setw(12) << report.task << std::setw(10)
            << report.metric_name << std::fixed << std::setprecision(4) << std::setw(9)
            << report.metric << std::setw(9) << report.ci_low << std::setw(9) << report.ci_high
            << std::setw(11) << report.deviation << report.global_contrib << "\n";
  return report;
}

}  // namespace framemae
