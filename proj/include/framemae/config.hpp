#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "framemae/errors.hpp"
#include "framemae/frontend.hpp"
#include "framemae/model.hpp"
#include "framemae/probe.hpp"
#include "framemae/synth.hpp"
#include "framemae/trainer.hpp"

namespace framemae {

struct RvqConfig {
  int num_codebooks = 8;
  int codebook_size = 64;
  int gamma_sample = 150;
  int kmeans_iters = 50;
  int max_train_frames = 20000;
};

struct SelftrainConfig {
  int k = 64;
  int sample_size = 200;
};

struct ProbeConfig {
  int epochs = 200;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  int bootstrap_iters = 100;
  std::map<std::string, NormStats> norm_stats;
};

struct DataConfig {
  SynthSpec synth;
  std::string dir;  // when set, load WAVs + labels.csv instead of synthesizing
};

struct RunConfig {
  uint64_t seed = 1;
  DataConfig data;
  FrontendConfig frontend;
  RvqConfig rvq;
  ModelConfig model;
  LossConfig loss;  // gamma filled from the tokenizer artifact
  TrainConfig trainer;
  SelftrainConfig selftrain;
  ProbeConfig probe;
};

namespace config_detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for config field: ") + key);
  }
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using config_detail::read_field;
  RunConfig cfg;
  read_field(j, "seed", cfg.seed);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    read_field(d, "generator", cfg.data.synth.generator);
    read_field(d, "classes", cfg.data.synth.classes);
    read_field(d, "items", cfg.data.synth.items);
    read_field(d, "seconds", cfg.data.synth.seconds);
    read_field(d, "sample_rate", cfg.data.synth.sample_rate);
    read_field(d, "base_freq", cfg.data.synth.base_freq);
    read_field(d, "freq_ratio", cfg.data.synth.freq_ratio);
    read_field(d, "noise_level", cfg.data.synth.noise_level);
    read_field(d, "base_mod_rate", cfg.data.synth.base_mod_rate);
    read_field(d, "mod_ratio", cfg.data.synth.mod_ratio);
    read_field(d, "dir", cfg.data.dir);
  }
  if (j.contains("frontend")) {
    const auto& f = j.at("frontend");
    read_field(f, "win", cfg.frontend.win);
    read_field(f, "hop", cfg.frontend.hop);
    read_field(f, "n_mels", cfg.frontend.n_mels);
  }
  if (j.contains("rvq")) {
    const auto& r = j.at("rvq");
    read_field(r, "num_codebooks", cfg.rvq.num_codebooks);
    read_field(r, "codebook_size", cfg.rvq.codebook_size);
    read_field(r, "gamma_sample", cfg.rvq.gamma_sample);
    read_field(r, "kmeans_iters", cfg.rvq.kmeans_iters);
    read_field(r, "max_train_frames", cfg.rvq.max_train_frames);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    read_field(m, "d_model", cfg.model.d_model);
    read_field(m, "enc_layers", cfg.model.enc_layers);
    read_field(m, "dec_layers", cfg.model.dec_layers);
    read_field(m, "heads", cfg.model.heads);
    read_field(m, "ff_mult", cfg.model.ff_mult);
    read_field(m, "max_len", cfg.model.max_len);
  }
  if (j.contains("loss")) read_field(j.at("loss"), "delta", cfg.loss.delta);
  if (j.contains("trainer")) {
    const auto& t = j.at("trainer");
    read_field(t, "lr", cfg.trainer.lr);
    read_field(t, "weight_decay", cfg.trainer.weight_decay);
    read_field(t, "beta1", cfg.trainer.beta1);
    read_field(t, "beta2", cfg.trainer.beta2);
    read_field(t, "batch_size", cfg.trainer.batch_size);
    read_field(t, "steps_stage1", cfg.trainer.steps_stage1);
    read_field(t, "steps_stage2", cfg.trainer.steps_stage2);
    read_field(t, "eval_every", cfg.trainer.eval_every);
    read_field(t, "crop_seconds", cfg.trainer.crop_seconds);
    read_field(t, "grad_clip", cfg.trainer.grad_clip);
  }
  if (j.contains("masking")) {
    const auto& m = j.at("masking");
    read_field(m, "proportion", cfg.trainer.mask_proportion);
    read_field(m, "span", cfg.trainer.mask_span);
  }
  if (j.contains("selftrain")) {
    const auto& s = j.at("selftrain");
    read_field(s, "k", cfg.selftrain.k);
    read_field(s, "sample_size", cfg.selftrain.sample_size);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    read_field(p, "epochs", cfg.probe.epochs);
    read_field(p, "train_fraction", cfg.probe.train_fraction);
    read_field(p, "val_fraction", cfg.probe.val_fraction);
    read_field(p, "bootstrap_iters", cfg.probe.bootstrap_iters);
    if (p.contains("norm_stats")) {
      for (const auto& [task, stats] : p.at("norm_stats").items()) {
        NormStats ns;
        read_field(stats, "mean", ns.mean);
        read_field(stats, "std", ns.std);
        cfg.probe.norm_stats[task] = ns;
      }
    }
  }
  // Derived fields kept consistent with the rest of the config.
  cfg.model.feat_dim = cfg.frontend.n_mels;
  cfg.model.num_codebooks = cfg.rvq.num_codebooks;
  cfg.model.classes = cfg.rvq.codebook_size;
  return cfg;
}

// Apply a dotted-path override like "trainer.lr=0.001"; the value is parsed
// as JSON when possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects section.key=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("--set path has an empty component: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {},
                                 uint64_t seed_override = 0, bool have_seed_override = false) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig cfg = parse_run_config(j);
  if (have_seed_override) cfg.seed = seed_override;
  cfg.model.validate();
  cfg.trainer.validate();
  return cfg;
}

}  // namespace framemae
