#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "styletag/common.hpp"
#include "styletag/corpus.hpp"
#include "styletag/metrics.hpp"

namespace styletag {

inline constexpr const char* kToolVersion = "0.1.0";

// Every default matches the values used for the shipped configuration
// (gamma 0.75, k 0.9, beam 5, dropout 0.3, 4 layers, 4 heads, dim 512).
// The desk preset swaps in a small model for fast CPU runs.
struct RunConfig {
  std::string work_dir;
  std::string corpus0;
  std::string corpus1;
  int target_style = 1;

  int ngram_min = 1;
  int ngram_max = 4;
  double gamma = 0.75;
  double k = 0.9;

  std::string tagger_mode = "add";  // add | replace | combined
  double sample_prob_scale = -1.0;  // <0 = deterministic replace-all
  int tag_budget = 20;

  std::string preset = "paper";  // paper | desk
  int vocab_size = 16000;
  int layers = 4;
  int heads = 4;
  int dim = 512;
  int ff_dim = 2048;
  double dropout = 0.3;
  int max_len = 64;

  int epochs = 30;
  int batch_size = 64;
  double lr = 3e-4;
  int warmup_steps = 4000;
  bool noise = true;  // generator-side denoising
  int noise_shuffle = 3;
  double noise_drop = 0.1;
  double noise_replace = 0.1;
  int checkpoint_every = 0;

  int classifier_epochs = 150;
  double classifier_lr = 0.5;
  double classifier_l2 = 1e-4;
  std::string external_scores0;  // optional scored JSONL overriding the classifier
  std::string external_scores1;

  int beam = 5;
  double length_norm = 0.0;
  std::string transfer_input;  // optional JSONL {"text"} overriding the test split

  uint64_t seed = 13;

  // parse "key = value" lines; unknown keys or bad values raise
  // ConfigError naming every offending key
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);
  void apply_preset(const std::string& preset_name);
  void validate() const;  // also checks referenced paths exist
  std::map<std::string, std::string> snapshot() const;
};

enum class Stage {
  preprocess,
  classify,
  markers,
  tagdata,
  train_tagger,
  train_generator,
  transfer,
  evaluate,
  ablate,
  all
};

Stage stage_from_name(const std::string& name);
const char* stage_name(Stage s);

// Executes one stage (or every core stage for Stage::all) against the
// work dir; writes artifacts plus a manifest per stage. Dependencies
// are checked up front and failures name the prerequisite stage.
void run_pipeline(const RunConfig& cfg, Stage stage);

// Helpers shared with tests and the CLI.
struct ScoredRecord {
  Sentence sentence;
  double score = 0.0;
  int bucket = 0;
  Split split = Split::train;
};
std::vector<ScoredRecord> read_scored_jsonl(const std::string& path);

struct TransferRecord {
  std::string text;
  std::string tagged;
  std::string output;
};
std::vector<TransferRecord> read_transfers_jsonl(const std::string& path);

MetricReport read_report_json(const std::string& path);

std::string artifact_path(const RunConfig& cfg, Stage stage, const std::string& name);

}  // namespace styletag
