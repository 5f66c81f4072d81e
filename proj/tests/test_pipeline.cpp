#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "styletag/pipeline.hpp"
#include "styletag/toy.hpp"

using namespace styletag;
namespace fs = std::filesystem;

namespace {

struct TempTree {
  fs::path root;
  TempTree() {
    root = fs::temp_directory_path() / ("styletag_pipe_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

std::string tiny_toy_config(const TempTree& tree) {
  ToyConfig toy;
  toy.mode = ToyConfig::Mode::neutral;
  toy.size = 160;
  toy.seed = 5;
  write_toy_corpus(toy, tree.path("toy"));

  std::string cfg = "# tiny smoke config\n"
                    "work_dir = " + tree.path("work") + "\n"
                    "corpus0 = " + tree.path("toy/style0.txt") + "\n"
                    "corpus1 = " + tree.path("toy/style1.txt") + "\n"
                    "preset = desk\n"
                    "vocab_size = 400\n"
                    "dim = 32\n"
                    "ff_dim = 64\n"
                    "epochs = 2\n"
                    "batch_size = 16\n"
                    "warmup_steps = 5\n"
                    "max_len = 48\n"
                    "beam = 2\n"
                    "seed = 21\n";
  std::string path = tree.path("config.txt");
  write_text_file(path, cfg);
  return path;
}

uint64_t file_hash(const std::string& path) { return fnv1a_file(path); }

}  // namespace

TEST_CASE("config parsing applies presets and overrides") {
  RunConfig cfg = RunConfig::from_text("work_dir = w\ncorpus0 = a\ncorpus1 = b\n");
  CHECK(cfg.layers == 4);
  CHECK(cfg.heads == 4);
  CHECK(cfg.dim == 512);
  CHECK(cfg.dropout == 0.3);
  CHECK(cfg.gamma == 0.75);
  CHECK(cfg.k == 0.9);
  CHECK(cfg.beam == 5);
  CHECK(cfg.vocab_size == 16000);

  RunConfig desk = RunConfig::from_text(
      "work_dir = w\ncorpus0 = a\ncorpus1 = b\npreset = desk\ndim = 128\n");
  CHECK(desk.layers == 2);
  CHECK(desk.dim == 128);  // explicit key beats the preset
}

TEST_CASE("config errors list the offending keys") {
  try {
    RunConfig::from_text("work_dir = w\nbogus_key = 1\nepochs = seven\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("bogus_key") != std::string::npos);
    CHECK(msg.find("epochs") != std::string::npos);
  }
}

TEST_CASE("validation checks paths and ranges") {
  RunConfig cfg;
  cfg.work_dir = "w";
  cfg.corpus0 = "/nonexistent/a.txt";
  cfg.corpus1 = "/nonexistent/b.txt";
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("corpus0") != std::string::npos);
    CHECK(msg.find("corpus1") != std::string::npos);
  }
}

TEST_CASE("missing dependency names the prerequisite stage") {
  TempTree tree;
  std::string cfg_path = tiny_toy_config(tree);
  RunConfig cfg = RunConfig::from_file(cfg_path);
  try {
    run_pipeline(cfg, Stage::markers);
    FAIL("expected dependency error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("classify") != std::string::npos);
  }
  // the lock must have been released on the error path
  CHECK_FALSE(fs::exists(fs::path(cfg.work_dir) / ".lock"));
}

TEST_CASE("lock file blocks concurrent runs") {
  TempTree tree;
  std::string cfg_path = tiny_toy_config(tree);
  RunConfig cfg = RunConfig::from_file(cfg_path);
  fs::create_directories(cfg.work_dir);
  write_text_file(cfg.work_dir + "/.lock", "");
  CHECK_THROWS_AS(run_pipeline(cfg, Stage::preprocess), IoError);
  fs::remove(cfg.work_dir + "/.lock");
}

TEST_CASE("full tiny pipeline runs and artifacts are complete") {
  TempTree tree;
  std::string cfg_path = tiny_toy_config(tree);
  RunConfig cfg = RunConfig::from_file(cfg_path);
  run_pipeline(cfg, Stage::all);

  for (const char* rel :
       {"preprocess/corpus0.jsonl", "preprocess/corpus1.jsonl", "preprocess/manifest.json",
        "classify/classifier.json", "classify/scored0.jsonl", "classify/scored1.jsonl",
        "markers/markers_src.tsv", "markers/markers_tgt.tsv", "tagdata/vocab.json",
        "tagdata/tagger_pairs.tsv", "tagdata/generator_pairs.tsv",
        "train-tagger/tagger.ckpt", "train-generator/generator.ckpt",
        "transfer/transfers.jsonl", "evaluate/report.json", "evaluate/report.txt"}) {
    CHECK_MESSAGE(fs::exists(fs::path(cfg.work_dir) / rel), rel);
  }

  MetricReport report = read_report_json(artifact_path(cfg, Stage::evaluate, "report.json"));
  CHECK(report.n > 0);
  CHECK(report.bleu_self >= 0.0);
  CHECK(report.bleu_self <= 100.0);
  CHECK(report.acc >= 0.0);
  CHECK(report.acc <= 1.0);

  auto scored = read_scored_jsonl(artifact_path(cfg, Stage::classify, "scored0.jsonl"));
  CHECK(!scored.empty());
  for (const auto& r : scored) {
    CHECK(r.score >= 0.0);
    CHECK(r.score <= 1.0);
    CHECK(r.bucket == std::min(9, int(r.score * 10)));
  }

  auto transfers = read_transfers_jsonl(artifact_path(cfg, Stage::transfer, "transfers.jsonl"));
  CHECK(!transfers.empty());

  // manifests carry config snapshot and input hashes
  std::string manifest = read_text_file(artifact_path(cfg, Stage::markers, "manifest.json"));
  CHECK(manifest.find("\"stage\"") != std::string::npos);
  CHECK(manifest.find("\"inputs\"") != std::string::npos);
  CHECK(manifest.find("\"seed\"") != std::string::npos);
}

TEST_CASE("stage rerun with identical config reproduces identical artifacts") {
  TempTree tree;
  std::string cfg_path = tiny_toy_config(tree);
  RunConfig cfg = RunConfig::from_file(cfg_path);

  run_pipeline(cfg, Stage::preprocess);
  run_pipeline(cfg, Stage::classify);
  uint64_t h1 = file_hash(artifact_path(cfg, Stage::classify, "scored0.jsonl"));
  run_pipeline(cfg, Stage::classify);
  uint64_t h2 = file_hash(artifact_path(cfg, Stage::classify, "scored0.jsonl"));
  CHECK(h1 == h2);
}

TEST_CASE("toy generator is deterministic and mode-sensitive") {
  ToyConfig a;
  a.size = 50;
  a.seed = 9;
  ToyCorpora c1 = generate_toy(a);
  ToyCorpora c2 = generate_toy(a);
  CHECK(c1.style0 == c2.style0);
  CHECK(c1.style1 == c2.style1);

  a.mode = ToyConfig::Mode::polar;
  ToyCorpora p = generate_toy(a);
  CHECK(p.style0 != c1.style0);

  // polite style contains courtesy phrases, neutral mostly not
  std::size_t courteous = 0;
  for (const auto& line : c1.style1)
    if (line.find("please") != std::string::npos || line.find("thank") != std::string::npos ||
        line.find("possible") != std::string::npos || line.find("kindly") != std::string::npos)
      ++courteous;
  CHECK(courteous > 45);
}
