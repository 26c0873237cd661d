#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "framemae/commands.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool have_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "Run config file (JSON)")->required();
  cmd->add_option("--set", args.overrides, "Override config values as section.key=value");
  cmd->add_option("--seed", args.seed, "Override the global seed")
      ->each([&args](const std::string&) { args.have_seed = true; });
}

framemae::RunConfig load(const CommonArgs& args) {
  return framemae::load_run_config(args.config, args.overrides, args.seed, args.have_seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-autoencoder audio representation pipeline"};
  app.require_subcommand(1);

  CommonArgs synth_args, tok_args, pre_args, self_args, ext_args, probe_args;
  std::string synth_out, tok_out, pre_out, pre_metrics, pre_tokenizer;
  std::string self_ckpt, self_out, self_kmeans, self_metrics;
  std::string ext_ckpt, ext_input, ext_out;
  std::string probe_ckpt, probe_out;

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic labeled WAV corpus");
  add_common(synth, synth_args);
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* tok = app.add_subcommand("train-tokenizer", "Fit the RVQ codebooks and gamma weights");
  add_common(tok, tok_args);
  tok->add_option("--out", tok_out, "Tokenizer output file")->required();

  auto* pre = app.add_subcommand("pretrain", "Stage-1 masked pretraining on RVQ targets");
  add_common(pre, pre_args);
  pre->add_option("--tokenizer", pre_tokenizer, "Tokenizer file")->required();
  pre->add_option("--out", pre_out, "Checkpoint output file")->required();
  pre->add_option("--metrics", pre_metrics, "Metrics CSV output file");

  auto* self = app.add_subcommand("selftrain", "Stage-2 training on k-means targets");
  add_common(self, self_args);
  self->add_option("--checkpoint", self_ckpt, "Stage-1 checkpoint")->required();
  self->add_option("--out", self_out, "Checkpoint output file")->required();
  self->add_option("--kmeans-out", self_kmeans, "Optional k-means model output file");
  self->add_option("--metrics", self_metrics, "Metrics CSV output file");

  auto* ext = app.add_subcommand("extract", "Extract frozen embeddings for a WAV file");
  add_common(ext, ext_args);
  ext->add_option("--checkpoint", ext_ckpt, "Model checkpoint")->required();
  ext->add_option("--input", ext_input, "Input WAV file")->required();
  ext->add_option("--out", ext_out, "Embedding output file")->required();

  auto* probe = app.add_subcommand("probe", "Train and evaluate a frozen-representation probe");
  add_common(probe, probe_args);
  probe->add_option("--checkpoint", probe_ckpt, "Model checkpoint")->required();
  probe->add_option("--out", probe_out, "Report output file (JSON)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      framemae::cmd_synth_data(load(synth_args), synth_out);
    } else if (tok->parsed()) {
      framemae::cmd_train_tokenizer(load(tok_args), tok_out);
    } else if (pre->parsed()) {
      framemae::cmd_pretrain(load(pre_args), pre_tokenizer, pre_out, pre_metrics);
    } else if (self->parsed()) {
      framemae::cmd_selftrain(load(self_args), self_ckpt, self_out, self_kmeans, self_metrics);
    } else if (ext->parsed()) {
      framemae::cmd_extract(load(ext_args), ext_ckpt, ext_input, ext_out);
    } else if (probe->parsed()) {
      framemae::cmd_probe(load(probe_args), probe_ckpt, probe_out);
    }
  } catch (const framemae::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const framemae::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const framemae::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
