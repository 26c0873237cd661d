#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "framemae/config.hpp"
#include "framemae/tensor_store.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("FRAMEMAE_CLI");
  REQUIRE_MESSAGE(p != nullptr, "FRAMEMAE_CLI must point at the CLI binary");
  return p;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = cli_path() + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("fm_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  fs::path p(const std::string& name) const { return dir / name; }
};

void write_tiny_config(const fs::path& path) {
  std::ofstream out(path);
  out << R"({
  "seed": 7,
  "data": {"generator": "pitch", "classes": 4, "items": 12, "seconds": 1.0,
           "noise_level": 0.05},
  "frontend": {"n_mels": 16},
  "rvq": {"num_codebooks": 2, "codebook_size": 8, "gamma_sample": 4,
          "kmeans_iters": 10, "max_train_frames": 2000},
  "model": {"d_model": 16, "enc_layers": 2, "dec_layers": 1, "heads": 2, "ff_mult": 2},
  "trainer": {"batch_size": 2, "steps_stage1": 4, "steps_stage2": 3,
              "eval_every": 2, "crop_seconds": 1.0},
  "masking": {"proportion": 0.5, "span": 5},
  "selftrain": {"k": 8, "sample_size": 8},
  "probe": {"epochs": 40, "bootstrap_iters": 50,
            "norm_stats": {"pitch": {"mean": 0.5, "std": 0.2}}}
})";
}

}  // namespace

TEST_CASE("missing and invalid configs exit with code 2") {
  Workspace ws;
  CHECK(run("train-tokenizer --config " + ws.p("nope.json").string() + " --out " +
                ws.p("tok.bin").string(),
            ws.p("log1")) == 2);
  write_tiny_config(ws.p("cfg.json"));
  CHECK(run("train-tokenizer --config " + ws.p("cfg.json").string() +
                " --set trainer.lr=0 --out " + ws.p("tok.bin").string(),
            ws.p("log2")) == 2);
  CHECK(run("train-tokenizer --config " + ws.p("cfg.json").string() +
                " --set model.dec_layers=5 --out " + ws.p("tok.bin").string(),
            ws.p("log3")) == 2);
}

TEST_CASE("malformed artifact files exit with code 3") {
  Workspace ws;
  write_tiny_config(ws.p("cfg.json"));
  {
    std::ofstream bad(ws.p("bad_tok.bin"), std::ios::binary);
    bad << "garbage bytes, not a tensor container";
  }
  CHECK(run("pretrain --config " + ws.p("cfg.json").string() + " --tokenizer " +
                ws.p("bad_tok.bin").string() + " --out " + ws.p("ckpt.bin").string(),
            ws.p("log")) == 3);
}

TEST_CASE("the full tiny pipeline runs end to end") {
  Workspace ws;
  const std::string cfg = ws.p("cfg.json").string();
  write_tiny_config(ws.p("cfg.json"));

  // synth-data
  REQUIRE(run("synth-data --config " + cfg + " --out " + ws.p("data").string(),
              ws.p("synth.log")) == 0);
  REQUIRE(fs::exists(ws.p("data") / "labels.csv"));
  int wavs = 0;
  for (const auto& e : fs::directory_iterator(ws.p("data")))
    if (e.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 12);

  // train-tokenizer
  REQUIRE(run("train-tokenizer --config " + cfg + " --out " + ws.p("tok.bin").string(),
              ws.p("tok.log")) == 0);
  {
    const framemae::TensorStore tok = framemae::TensorStore::load(ws.p("tok.bin").string());
    CHECK(tok.meta("kind") == "tokenizer");
    CHECK(tok.get_f64("codebook.0").rows() == 8);
    CHECK(tok.get_f64("codebook.0").cols() == 16);
    CHECK(tok.get_f64("codebook.1").rows() == 8);
    CHECK(tok.get_f64("gamma").rows() == 2);
    CHECK(tok.get_f64("gamma").sum() == doctest::Approx(1.0));
    // manifest is the documented text format
    const std::string bytes = slurp(ws.p("tok.bin"));
    CHECK(bytes.rfind("framemae-tensors v1", 0) == 0);
    CHECK(bytes.find("tensor codebook.0 f64 8 16 @") != std::string::npos);
    CHECK(bytes.find("checksum fnv1a64 ") != std::string::npos);
  }

  // pretrain with metrics
  REQUIRE(run("pretrain --config " + cfg + " --tokenizer " + ws.p("tok.bin").string() +
                  " --out " + ws.p("ckpt1.bin").string() + " --metrics " +
                  ws.p("metrics.csv").string(),
              ws.p("pre.log")) == 0);
  {
    const std::string metrics = slurp(ws.p("metrics.csv"));
    // 4 steps at cadence 2: logs at steps 1, 3 and the final step 4
    std::istringstream in(metrics);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0].rfind("1,", 0) == 0);
    CHECK(lines[1].rfind("3,", 0) == 0);
    CHECK(lines[2].rfind("4,", 0) == 0);
    // step,loss plus one accuracy column per codebook
    CHECK(std::count(lines[0].begin(), lines[0].end(), ',') == 3);
  }

  // identical reruns are byte-identical
  REQUIRE(run("pretrain --config " + cfg + " --tokenizer " + ws.p("tok.bin").string() +
                  " --out " + ws.p("ckpt1b.bin").string(),
              ws.p("pre2.log")) == 0);
  CHECK(slurp(ws.p("ckpt1.bin")) == slurp(ws.p("ckpt1b.bin")));

  // a different seed changes the checkpoint
  REQUIRE(run("pretrain --config " + cfg + " --seed 8 --tokenizer " +
                  ws.p("tok.bin").string() + " --out " + ws.p("ckpt1c.bin").string(),
              ws.p("pre3.log")) == 0);
  CHECK(slurp(ws.p("ckpt1.bin")) != slurp(ws.p("ckpt1c.bin")));

  // selftrain
  REQUIRE(run("selftrain --config " + cfg + " --checkpoint " + ws.p("ckpt1.bin").string() +
                  " --out " + ws.p("ckpt2.bin").string() + " --kmeans-out " +
                  ws.p("km.bin").string(),
              ws.p("self.log")) == 0);
  {
    auto [mcfg, params] = framemae::load_checkpoint(ws.p("ckpt2.bin").string());
    CHECK(mcfg.num_codebooks == 1);
    CHECK(mcfg.classes == 8);  // selftrain.k
    const framemae::TensorStore km = framemae::TensorStore::load(ws.p("km.bin").string());
    CHECK(km.get_f64("centroids").rows() == 8);
    CHECK(km.get_f64("centroids").cols() == 16);
  }

  // extract embeddings for one of the synthesized clips
  REQUIRE(run("extract --config " + cfg + " --checkpoint " + ws.p("ckpt2.bin").string() +
                  " --input " + (ws.p("data") / "item_00000.wav").string() + " --out " +
                  ws.p("emb.bin").string(),
              ws.p("ext.log")) == 0);
  {
    const framemae::TensorStore emb = framemae::TensorStore::load(ws.p("emb.bin").string());
    const framemae::Mat e = emb.get_f64("embeddings");
    CHECK(e.rows() == 75);  // 1 s at 75 frames/s
    CHECK(e.cols() == 16);
    CHECK(emb.meta("frame_rate") == "75");
  }

  // probe with JSON report
  REQUIRE(run("probe --config " + cfg + " --checkpoint " + ws.p("ckpt2.bin").string() +
                  " --out " + ws.p("report.json").string(),
              ws.p("probe.log")) == 0);
  {
    std::ifstream rf(ws.p("report.json"));
    const nlohmann::json report = nlohmann::json::parse(rf);
    CHECK(report.at("task") == "pitch");
    CHECK(report.at("metric_name") == "accuracy");
    const double metric = report.at("metric").get<double>();
    CHECK(metric >= 0.0);
    CHECK(metric <= 1.0);
    CHECK(report.at("ci_low").get<double>() <= metric);
    CHECK(report.at("ci_high").get<double>() >= metric);
    CHECK(report.contains("global_contrib"));
  }
}

TEST_CASE("a mask that always covers everything exits with code 4") {
  Workspace ws;
  const std::string cfg = ws.p("cfg.json").string();
  write_tiny_config(ws.p("cfg.json"));
  REQUIRE(run("train-tokenizer --config " + cfg + " --out " + ws.p("tok.bin").string(),
              ws.p("tok.log")) == 0);
  // proportion 0.997 with span 1 over 75 frames masks every frame on every
  // attempt, so the retry guard gives up
  CHECK(run("pretrain --config " + cfg +
                " --set masking.proportion=0.997 --set masking.span=1 --tokenizer " +
                ws.p("tok.bin").string() + " --out " + ws.p("ckpt.bin").string(),
            ws.p("pre.log")) == 4);
}

TEST_CASE("probe without norm stats for the task exits with code 2") {
  Workspace ws;
  const std::string cfg = ws.p("cfg.json").string();
  write_tiny_config(ws.p("cfg.json"));
  REQUIRE(run("train-tokenizer --config " + cfg + " --out " + ws.p("tok.bin").string(),
              ws.p("tok.log")) == 0);
  REQUIRE(run("pretrain --config " + cfg + " --tokenizer " + ws.p("tok.bin").string() +
                  " --out " + ws.p("ckpt.bin").string(),
              ws.p("pre.log")) == 0);
  CHECK(run("probe --config " + cfg + " --set data.generator=am_noise --checkpoint " +
                ws.p("ckpt.bin").string() + " --out " + ws.p("report.json").string(),
            ws.p("probe.log")) == 2);
}
