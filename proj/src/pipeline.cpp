#include "styletag/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "styletag/bpe.hpp"
#include "styletag/classifier.hpp"
#include "styletag/decode.hpp"
#include "styletag/markers.hpp"
#include "styletag/model.hpp"
#include "styletag/tagdata.hpp"
#include "styletag/train.hpp"

namespace fs = std::filesystem;

namespace styletag {

// ---- config ---------------------------------------------------------------

namespace {

struct KeyValue {
  std::string value;
  bool used = false;
};

std::map<std::string, KeyValue> parse_kv(const std::string& text) {
  std::map<std::string, KeyValue> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> bad;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      std::size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      bad.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    kv[trim(t.substr(0, eq))] = {trim(t.substr(eq + 1)), false};
  }
  if (!bad.empty()) {
    std::string msg = "config syntax errors:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
  return kv;
}

}  // namespace

void RunConfig::apply_preset(const std::string& preset_name) {
  preset = preset_name;
  if (preset_name == "paper") {
    layers = 4;
    heads = 4;
    dim = 512;
    ff_dim = 2048;
    dropout = 0.3;
    vocab_size = 16000;
  } else if (preset_name == "desk") {
    layers = 2;
    heads = 2;
    dim = 64;
    ff_dim = 256;
    dropout = 0.1;
    vocab_size = 1000;
    warmup_steps = 200;
    lr = 1e-3;
  } else {
    throw ConfigError("unknown preset: " + preset_name + " (expected paper or desk)");
  }
}

RunConfig RunConfig::from_text(const std::string& text) {
  auto kv = parse_kv(text);
  RunConfig cfg;
  std::vector<std::string> errors;

  // the preset seeds the model keys; explicit keys then override it
  auto pre = kv.find("preset");
  if (pre != kv.end()) {
    try {
      cfg.apply_preset(pre->second.value);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
    pre->second.used = true;
  }

  auto gets = [&](const char* key, std::string& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    out = it->second.value;
    it->second.used = true;
  };
  auto geti = [&](const char* key, int& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    it->second.used = true;
    try {
      std::size_t pos = 0;
      out = std::stoi(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      errors.push_back(std::string(key) + ": not an integer: " + it->second.value);
    }
  };
  auto getd = [&](const char* key, double& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    it->second.used = true;
    if (it->second.value == "inf") {
      out = -1.0;  // replace-all sentinel
      return;
    }
    try {
      std::size_t pos = 0;
      out = std::stod(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      errors.push_back(std::string(key) + ": not a number: " + it->second.value);
    }
  };
  auto getb = [&](const char* key, bool& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    it->second.used = true;
    const std::string& v = it->second.value;
    if (v == "on" || v == "true" || v == "1")
      out = true;
    else if (v == "off" || v == "false" || v == "0")
      out = false;
    else
      errors.push_back(std::string(key) + ": expected on/off: " + v);
  };
  auto getu64 = [&](const char* key, uint64_t& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    it->second.used = true;
    try {
      out = std::stoull(it->second.value);
    } catch (const std::exception&) {
      errors.push_back(std::string(key) + ": not an unsigned integer: " + it->second.value);
    }
  };

  gets("work_dir", cfg.work_dir);
  gets("corpus0", cfg.corpus0);
  gets("corpus1", cfg.corpus1);
  geti("target_style", cfg.target_style);
  geti("ngram_min", cfg.ngram_min);
  geti("ngram_max", cfg.ngram_max);
  getd("gamma", cfg.gamma);
  getd("k", cfg.k);
  gets("tagger_mode", cfg.tagger_mode);
  getd("sample_prob_scale", cfg.sample_prob_scale);
  geti("tag_budget", cfg.tag_budget);
  geti("vocab_size", cfg.vocab_size);
  geti("layers", cfg.layers);
  geti("heads", cfg.heads);
  geti("dim", cfg.dim);
  geti("ff_dim", cfg.ff_dim);
  getd("dropout", cfg.dropout);
  geti("max_len", cfg.max_len);
  geti("epochs", cfg.epochs);
  geti("batch_size", cfg.batch_size);
  getd("lr", cfg.lr);
  geti("warmup_steps", cfg.warmup_steps);
  getb("noise", cfg.noise);
  geti("noise_shuffle", cfg.noise_shuffle);
  getd("noise_drop", cfg.noise_drop);
  getd("noise_replace", cfg.noise_replace);
  geti("checkpoint_every", cfg.checkpoint_every);
  geti("classifier_epochs", cfg.classifier_epochs);
  getd("classifier_lr", cfg.classifier_lr);
  getd("classifier_l2", cfg.classifier_l2);
  gets("external_scores0", cfg.external_scores0);
  gets("external_scores1", cfg.external_scores1);
  geti("beam", cfg.beam);
  getd("length_norm", cfg.length_norm);
  gets("transfer_input", cfg.transfer_input);
  getu64("seed", cfg.seed);

  std::vector<std::string> unknown;
  for (const auto& [key, val] : kv)
    if (!val.used) unknown.push_back(key);
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k2 : unknown) msg += " " + k2;
    errors.push_back(msg);
  }
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_text(read_text_file(path));
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  if (work_dir.empty()) errors.push_back("work_dir: required");
  if (corpus0.empty())
    errors.push_back("corpus0: required");
  else if (!fs::exists(corpus0))
    errors.push_back("corpus0: no such file: " + corpus0);
  if (corpus1.empty())
    errors.push_back("corpus1: required");
  else if (!fs::exists(corpus1))
    errors.push_back("corpus1: no such file: " + corpus1);
  if (target_style != 0 && target_style != 1) errors.push_back("target_style: must be 0 or 1");
  if (ngram_min < 1 || ngram_max < ngram_min) errors.push_back("ngram_min/ngram_max: bad range");
  if (!(gamma > 0.0)) errors.push_back("gamma: must be positive");
  if (tagger_mode != "add" && tagger_mode != "replace" && tagger_mode != "combined")
    errors.push_back("tagger_mode: expected add, replace or combined");
  if (tag_budget < 1) errors.push_back("tag_budget: must be >= 1");
  if (vocab_size < 30) errors.push_back("vocab_size: too small");
  if (dim % heads != 0) errors.push_back("dim: must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) errors.push_back("dropout: must be in [0,1)");
  if (max_len < 8) errors.push_back("max_len: must be >= 8");
  if (epochs < 1) errors.push_back("epochs: must be >= 1");
  if (batch_size < 1) errors.push_back("batch_size: must be >= 1");
  if (beam < 1) errors.push_back("beam: must be >= 1");
  if (!external_scores0.empty() && !fs::exists(external_scores0))
    errors.push_back("external_scores0: no such file: " + external_scores0);
  if (!external_scores1.empty() && !fs::exists(external_scores1))
    errors.push_back("external_scores1: no such file: " + external_scores1);
  if (!transfer_input.empty() && !fs::exists(transfer_input))
    errors.push_back("transfer_input: no such file: " + transfer_input);
  if (!errors.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

std::map<std::string, std::string> RunConfig::snapshot() const {
  std::map<std::string, std::string> m;
  auto num = [](double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  };
  m["work_dir"] = work_dir;
  m["corpus0"] = corpus0;
  m["corpus1"] = corpus1;
  m["target_style"] = std::to_string(target_style);
  m["ngram_min"] = std::to_string(ngram_min);
  m["ngram_max"] = std::to_string(ngram_max);
  m["gamma"] = num(gamma);
  m["k"] = num(k);
  m["tagger_mode"] = tagger_mode;
  m["sample_prob_scale"] = sample_prob_scale < 0 ? "inf" : num(sample_prob_scale);
  m["tag_budget"] = std::to_string(tag_budget);
  m["preset"] = preset;
  m["vocab_size"] = std::to_string(vocab_size);
  m["layers"] = std::to_string(layers);
  m["heads"] = std::to_string(heads);
  m["dim"] = std::to_string(dim);
  m["ff_dim"] = std::to_string(ff_dim);
  m["dropout"] = num(dropout);
  m["max_len"] = std::to_string(max_len);
  m["epochs"] = std::to_string(epochs);
  m["batch_size"] = std::to_string(batch_size);
  m["lr"] = num(lr);
  m["warmup_steps"] = std::to_string(warmup_steps);
  m["noise"] = noise ? "on" : "off";
  m["noise_shuffle"] = std::to_string(noise_shuffle);
  m["noise_drop"] = num(noise_drop);
  m["noise_replace"] = num(noise_replace);
  m["checkpoint_every"] = std::to_string(checkpoint_every);
  m["classifier_epochs"] = std::to_string(classifier_epochs);
  m["classifier_lr"] = num(classifier_lr);
  m["classifier_l2"] = num(classifier_l2);
  m["external_scores0"] = external_scores0;
  m["external_scores1"] = external_scores1;
  m["beam"] = std::to_string(beam);
  m["length_norm"] = num(length_norm);
  m["transfer_input"] = transfer_input;
  m["seed"] = std::to_string(seed);
  return m;
}

// ---- stages ----------------------------------------------------------------

Stage stage_from_name(const std::string& name) {
  if (name == "preprocess") return Stage::preprocess;
  if (name == "classify") return Stage::classify;
  if (name == "markers") return Stage::markers;
  if (name == "tagdata") return Stage::tagdata;
  if (name == "train-tagger") return Stage::train_tagger;
  if (name == "train-generator") return Stage::train_generator;
  if (name == "transfer") return Stage::transfer;
  if (name == "evaluate") return Stage::evaluate;
  if (name == "ablate") return Stage::ablate;
  if (name == "all") return Stage::all;
  throw ConfigError("unknown stage: " + name);
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::preprocess: return "preprocess";
    case Stage::classify: return "classify";
    case Stage::markers: return "markers";
    case Stage::tagdata: return "tagdata";
    case Stage::train_tagger: return "train-tagger";
    case Stage::train_generator: return "train-generator";
    case Stage::transfer: return "transfer";
    case Stage::evaluate: return "evaluate";
    case Stage::ablate: return "ablate";
    case Stage::all: return "all";
  }
  return "?";
}

std::string artifact_path(const RunConfig& cfg, Stage stage, const std::string& name) {
  return cfg.work_dir + "/" + stage_name(stage) + "/" + name;
}

namespace {

// Exclusive work-dir ownership for the duration of a pipeline run.
class WorkDirLock {
 public:
  explicit WorkDirLock(const std::string& work_dir) : path_(work_dir + "/.lock") {
    fs::create_directories(work_dir);
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw IoError("work dir is locked by another run (remove " + path_ +
                    " if that run is dead)");
    ::close(fd);
  }
  ~WorkDirLock() { ::unlink(path_.c_str()); }
  WorkDirLock(const WorkDirLock&) = delete;
  WorkDirLock& operator=(const WorkDirLock&) = delete;

 private:
  std::string path_;
};

void require_artifact(const RunConfig& cfg, Stage producer, const std::string& name,
                      Stage consumer) {
  std::string path = artifact_path(cfg, producer, name);
  if (!fs::exists(path))
    throw Error(std::string(stage_name(consumer)) + " requires " + path +
                "; run the `" + stage_name(producer) + "` stage first");
}

void write_manifest(const RunConfig& cfg, Stage stage,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& outputs,
                    const std::map<std::string, std::string>& extra = {}) {
  nlohmann::json j;
  j["stage"] = stage_name(stage);
  j["tool_version"] = kToolVersion;
  j["seed"] = cfg.seed;
  j["config"] = cfg.snapshot();
  nlohmann::json inputs;
  for (const auto& p : input_paths) {
    char h[17];
    std::snprintf(h, sizeof(h), "%016llx", static_cast<unsigned long long>(fnv1a_file(p)));
    inputs[p] = h;
  }
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  for (const auto& [k2, v] : extra) j["extra"][k2] = v;
  write_text_file(artifact_path(cfg, stage, "manifest.json"), j.dump(2) + "\n");
}

void ensure_stage_dir(const RunConfig& cfg, Stage stage) {
  fs::create_directories(cfg.work_dir + "/" + stage_name(stage));
}

std::string corpus_jsonl(const StyleCorpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    nlohmann::json j;
    j["text"] = s.raw;
    j["tokens"] = s.tokens;
    out += j.dump();
    out += '\n';
  }
  return out;
}

StyleCorpus corpus_from_jsonl(const std::string& path, const std::string& style_id) {
  StyleCorpus corpus;
  corpus.style_id = style_id;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Sentence s;
    s.raw = j.at("text").get<std::string>();
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    corpus.sentences.push_back(std::move(s));
  }
  if (corpus.empty()) throw EmptyCorpusError("no records in " + path);
  return corpus;
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  if (name == "dev") return Split::dev;
  throw LoadError("unknown split: " + name);
}

void stage_preprocess(const RunConfig& cfg) {
  ensure_stage_dir(cfg, Stage::preprocess);
  auto run = [&](const std::string& path, const std::string& style_id, const std::string& out,
                 nlohmann::json& counts) {
    FilterCounts fc;
    StyleCorpus corpus = ingest_corpus(path, style_id, &fc);
    write_text_file(artifact_path(cfg, Stage::preprocess, out), corpus_jsonl(corpus));
    counts["too_short"] = fc.too_short;
    counts["too_numeric"] = fc.too_numeric;
    counts["email"] = fc.email;
    counts["spurious"] = fc.spurious;
    counts["duplicate"] = fc.duplicate;
    counts["kept"] = fc.kept;
    return corpus.size();
  };
  nlohmann::json c0, c1;
  run(cfg.corpus0, "style0", "corpus0.jsonl", c0);
  run(cfg.corpus1, "style1", "corpus1.jsonl", c1);
  std::map<std::string, std::string> extra;
  extra["filter_counts_style0"] = c0.dump();
  extra["filter_counts_style1"] = c1.dump();
  write_manifest(cfg, Stage::preprocess, {cfg.corpus0, cfg.corpus1},
                 {"corpus0.jsonl", "corpus1.jsonl"}, extra);
}

std::string scored_jsonl(const std::vector<ScoredBucket>& buckets) {
  std::string out;
  for (const auto& b : buckets) {
    for (const auto& ss : b.sentences) {
      nlohmann::json j;
      j["text"] = ss.sentence.raw;
      j["tokens"] = ss.sentence.tokens;
      j["score"] = ss.score;
      j["bucket"] = b.bucket_index;
      j["split"] = split_name(b.split);
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

// Optional externally provided scores keyed by detokenized text.
std::map<std::string, double> load_external_scores(const std::string& path) {
  std::map<std::string, double> scores;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    scores[j.at("text").get<std::string>()] = j.at("score").get<double>();
  }
  return scores;
}

void stage_classify(const RunConfig& cfg) {
  require_artifact(cfg, Stage::preprocess, "corpus0.jsonl", Stage::classify);
  require_artifact(cfg, Stage::preprocess, "corpus1.jsonl", Stage::classify);
  ensure_stage_dir(cfg, Stage::classify);

  StyleCorpus c0 = corpus_from_jsonl(artifact_path(cfg, Stage::preprocess, "corpus0.jsonl"),
                                     "style0");
  StyleCorpus c1 = corpus_from_jsonl(artifact_path(cfg, Stage::preprocess, "corpus1.jsonl"),
                                     "style1");

  ClassifierConfig ccfg;
  ccfg.epochs = cfg.classifier_epochs;
  ccfg.lr = cfg.classifier_lr;
  ccfg.l2 = cfg.classifier_l2;
  NgramClassifier classifier = NgramClassifier::train(c0, c1, ccfg);
  classifier.save(artifact_path(cfg, Stage::classify, "classifier.json"));

  auto bucket = [&](const StyleCorpus& corpus, const std::string& ext_path, uint64_t salt,
                    const std::string& out) {
    StyleScorer scorer;
    std::map<std::string, double> ext;
    if (!ext_path.empty()) {
      ext = load_external_scores(ext_path);
      scorer = [&ext, &classifier](const Sentence& s) {
        auto it = ext.find(detokenize(s));
        return it != ext.end() ? it->second : classifier.score(s);
      };
    } else {
      scorer = [&classifier](const Sentence& s) { return classifier.score(s); };
    }
    auto buckets = bucket_by_score(corpus, scorer, cfg.seed ^ salt);
    write_text_file(artifact_path(cfg, Stage::classify, out), scored_jsonl(buckets));
  };
  bucket(c0, cfg.external_scores0, 0xc0deULL, "scored0.jsonl");
  bucket(c1, cfg.external_scores1, 0xc1deULL, "scored1.jsonl");

  write_manifest(cfg, Stage::classify,
                 {artifact_path(cfg, Stage::preprocess, "corpus0.jsonl"),
                  artifact_path(cfg, Stage::preprocess, "corpus1.jsonl")},
                 {"classifier.json", "scored0.jsonl", "scored1.jsonl"});
}

struct SplitCorpora {
  StyleCorpus src_train, src_test, tgt_train_p9, tgt_train_all;
};

SplitCorpora load_split_corpora(const RunConfig& cfg) {
  std::string src_file = cfg.target_style == 1 ? "scored0.jsonl" : "scored1.jsonl";
  std::string tgt_file = cfg.target_style == 1 ? "scored1.jsonl" : "scored0.jsonl";
  auto src = read_scored_jsonl(artifact_path(cfg, Stage::classify, src_file));
  auto tgt = read_scored_jsonl(artifact_path(cfg, Stage::classify, tgt_file));

  SplitCorpora out;
  out.src_train.style_id = "source";
  out.src_test.style_id = "source";
  out.tgt_train_p9.style_id = "target";
  out.tgt_train_all.style_id = "target";
  for (const auto& r : src) {
    if (r.split == Split::train) out.src_train.sentences.push_back(r.sentence);
    if (r.split == Split::test) out.src_test.sentences.push_back(r.sentence);
  }
  for (const auto& r : tgt) {
    if (r.split == Split::train) {
      out.tgt_train_all.sentences.push_back(r.sentence);
      if (r.bucket == 9) out.tgt_train_p9.sentences.push_back(r.sentence);
    }
  }
  if (out.src_train.empty()) throw EmptyCorpusError("source train split is empty");
  if (out.tgt_train_p9.empty())
    throw EmptyCorpusError("bucket 9 train split of the target corpus is empty");
  return out;
}

void stage_markers(const RunConfig& cfg) {
  require_artifact(cfg, Stage::classify, "scored0.jsonl", Stage::markers);
  require_artifact(cfg, Stage::classify, "scored1.jsonl", Stage::markers);
  ensure_stage_dir(cfg, Stage::markers);

  SplitCorpora sc = load_split_corpora(cfg);
  auto stats_tgt = style_impact(sc.src_train, sc.tgt_train_p9, cfg.ngram_min, cfg.ngram_max,
                                cfg.gamma);
  MarkerSet tgt = extract_markers(stats_tgt, cfg.k, "target");
  auto stats_src = style_impact(sc.tgt_train_p9, sc.src_train, cfg.ngram_min, cfg.ngram_max,
                                cfg.gamma);
  MarkerSet src = extract_markers(stats_src, cfg.k, "source");

  write_text_file(artifact_path(cfg, Stage::markers, "markers_tgt.tsv"), markers_to_tsv(tgt));
  write_text_file(artifact_path(cfg, Stage::markers, "markers_src.tsv"), markers_to_tsv(src));
  std::map<std::string, std::string> extra;
  extra["tgt_marker_count"] = std::to_string(tgt.phrases.size());
  extra["src_marker_count"] = std::to_string(src.phrases.size());
  if (tgt.empty_warning) extra["warning"] = "target marker set is empty";
  write_manifest(cfg, Stage::markers,
                 {artifact_path(cfg, Stage::classify, "scored0.jsonl"),
                  artifact_path(cfg, Stage::classify, "scored1.jsonl")},
                 {"markers_src.tsv", "markers_tgt.tsv"}, extra);
}

std::vector<ParallelPair> build_tagger_pairs(const RunConfig& cfg, const SplitCorpora& sc,
                                             const MarkerSet& src_markers,
                                             const MarkerSet& tgt_markers,
                                             const std::string& mode) {
  double scale = cfg.sample_prob_scale < 0 ? kReplaceAll : cfg.sample_prob_scale;
  if (mode == "add") return make_add_pairs(sc.tgt_train_p9, tgt_markers, cfg.tag_budget);
  if (mode == "replace")
    return make_replace_pairs(sc.src_train, src_markers, scale, cfg.seed ^ 0x4e91ULL,
                              cfg.tag_budget);
  auto add = make_add_pairs(sc.tgt_train_p9, tgt_markers, cfg.tag_budget);
  auto rep = make_replace_pairs(sc.src_train, src_markers, scale, cfg.seed ^ 0x4e91ULL,
                                cfg.tag_budget);
  return make_combined_pairs(add, rep, cfg.seed ^ 0xc03bULL);
}

void stage_tagdata(const RunConfig& cfg) {
  require_artifact(cfg, Stage::classify, "scored0.jsonl", Stage::tagdata);
  require_artifact(cfg, Stage::markers, "markers_tgt.tsv", Stage::tagdata);
  ensure_stage_dir(cfg, Stage::tagdata);

  SplitCorpora sc = load_split_corpora(cfg);
  MarkerSet tgt = markers_from_tsv(
      read_text_file(artifact_path(cfg, Stage::markers, "markers_tgt.tsv")), "target", cfg.k);
  MarkerSet src = markers_from_tsv(
      read_text_file(artifact_path(cfg, Stage::markers, "markers_src.tsv")), "source", cfg.k);

  BpeVocab vocab = BpeVocab::train({&sc.src_train, &sc.tgt_train_all},
                                   std::size_t(cfg.vocab_size), cfg.tag_budget);
  vocab.save(artifact_path(cfg, Stage::tagdata, "vocab.json"));

  auto tagger_pairs = build_tagger_pairs(cfg, sc, src, tgt, cfg.tagger_mode);
  if (tagger_pairs.empty())
    throw EmptyCorpusError("tagger training data is empty; marker sets may be too small");
  write_text_file(artifact_path(cfg, Stage::tagdata, "tagger_pairs.tsv"),
                  pairs_to_tsv(tagger_pairs));

  auto gen_pairs = make_generator_pairs(sc.tgt_train_p9, tgt, cfg.tag_budget);
  write_text_file(artifact_path(cfg, Stage::tagdata, "generator_pairs.tsv"),
                  pairs_to_tsv(gen_pairs));

  std::map<std::string, std::string> extra;
  extra["tagger_pairs"] = std::to_string(tagger_pairs.size());
  extra["generator_pairs"] = std::to_string(gen_pairs.size());
  extra["vocab_size"] = std::to_string(vocab.size());
  write_manifest(cfg, Stage::tagdata,
                 {artifact_path(cfg, Stage::classify, "scored0.jsonl"),
                  artifact_path(cfg, Stage::classify, "scored1.jsonl"),
                  artifact_path(cfg, Stage::markers, "markers_src.tsv"),
                  artifact_path(cfg, Stage::markers, "markers_tgt.tsv")},
                 {"vocab.json", "tagger_pairs.tsv", "generator_pairs.tsv"}, extra);
}

ModelConfig model_config_for(const RunConfig& cfg, const BpeVocab& vocab,
                             const std::string& role) {
  ModelConfig mc;
  mc.layers = cfg.layers;
  mc.heads = cfg.heads;
  mc.dim = cfg.dim;
  mc.ff_dim = cfg.ff_dim;
  mc.dropout = cfg.dropout;
  mc.max_len = cfg.max_len;
  mc.vocab_size = int(vocab.size());
  mc.seed = cfg.seed ^ (role == "tagger" ? 0x7a66ULL : 0x6e9eULL);
  mc.role = role;
  return mc;
}

TrainConfig train_config_for(const RunConfig& cfg, Stage stage, const std::string& name) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.warmup_steps = cfg.warmup_steps;
  tc.seed = cfg.seed ^ fnv1a(name.data(), name.size());
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.checkpoint_dir = cfg.work_dir + "/" + stage_name(stage);
  tc.checkpoint_name = name;
  return tc;
}

void train_stage(const RunConfig& cfg, Stage stage, const std::string& role,
                 const std::string& pairs_file) {
  require_artifact(cfg, Stage::tagdata, "vocab.json", stage);
  require_artifact(cfg, Stage::tagdata, pairs_file, stage);
  ensure_stage_dir(cfg, stage);

  BpeVocab vocab = BpeVocab::load(artifact_path(cfg, Stage::tagdata, "vocab.json"));
  auto pairs = pairs_from_tsv(read_text_file(artifact_path(cfg, Stage::tagdata, pairs_file)));

  Model model(model_config_for(cfg, vocab, role));
  TrainConfig tc = train_config_for(cfg, stage, role);
  NoiseConfig nc{cfg.noise_shuffle, cfg.noise_drop, cfg.noise_replace};
  bool use_noise = cfg.noise && role == "generator";
  TrainResult tr = train_model(model, vocab, pairs, tc, use_noise ? &nc : nullptr);

  std::map<std::string, std::string> extra;
  extra["final_loss"] =
      tr.epoch_losses.empty() ? "nan" : std::to_string(tr.epoch_losses.back());
  extra["steps"] = std::to_string(tr.steps);
  write_manifest(cfg, stage,
                 {artifact_path(cfg, Stage::tagdata, "vocab.json"),
                  artifact_path(cfg, Stage::tagdata, pairs_file)},
                 {role + ".ckpt"}, extra);
}

void stage_transfer(const RunConfig& cfg) {
  require_artifact(cfg, Stage::tagdata, "vocab.json", Stage::transfer);
  require_artifact(cfg, Stage::train_tagger, "tagger.ckpt", Stage::transfer);
  require_artifact(cfg, Stage::train_generator, "generator.ckpt", Stage::transfer);
  require_artifact(cfg, Stage::classify, "scored0.jsonl", Stage::transfer);
  ensure_stage_dir(cfg, Stage::transfer);

  BpeVocab vocab = BpeVocab::load(artifact_path(cfg, Stage::tagdata, "vocab.json"));
  Model tagger = load_checkpoint(artifact_path(cfg, Stage::train_tagger, "tagger.ckpt"), &vocab);
  Model generator =
      load_checkpoint(artifact_path(cfg, Stage::train_generator, "generator.ckpt"), &vocab);

  std::vector<Sentence> inputs;
  if (!cfg.transfer_input.empty()) {
    // batch interface: JSONL {"text"} records, order preserved
    std::istringstream in(read_text_file(cfg.transfer_input));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      std::string text = j.at("text").get<std::string>();
      Sentence s;
      std::istringstream ss(text);
      std::string tok;
      while (ss >> tok) {
        for (auto& ch : tok) ch = char(std::tolower(static_cast<unsigned char>(ch)));
        s.tokens.push_back(tok);
      }
      s.raw = text;
      if (!s.tokens.empty()) inputs.push_back(std::move(s));
    }
    if (inputs.empty()) throw EmptyCorpusError("transfer_input has no usable records");
  } else {
    SplitCorpora sc = load_split_corpora(cfg);
    if (sc.src_test.empty()) throw EmptyCorpusError("source test split is empty");
    inputs = std::move(sc.src_test.sentences);
  }

  BeamConfig bc;
  bc.beam = cfg.beam;
  bc.length_norm = cfg.length_norm;

  std::string out;
  for (const auto& s : inputs) {
    TransferResult r = transfer(tagger, generator, vocab, s, bc);
    nlohmann::json j;
    j["text"] = detokenize(s);
    j["tagged"] = detokenize(r.tagged.tokens);
    j["output"] = detokenize(r.output.tokens);
    if (r.tagger_truncated || r.generator_truncated) j["truncated"] = true;
    out += j.dump();
    out += '\n';
  }
  write_text_file(artifact_path(cfg, Stage::transfer, "transfers.jsonl"), out);
  write_manifest(cfg, Stage::transfer,
                 {artifact_path(cfg, Stage::train_tagger, "tagger.ckpt"),
                  artifact_path(cfg, Stage::train_generator, "generator.ckpt"),
                  artifact_path(cfg, Stage::classify, "scored0.jsonl")},
                 {"transfers.jsonl"});
}

std::vector<std::string> tokenize_simple(const std::string& text) {
  std::vector<std::string> toks;
  std::istringstream ss(text);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

void stage_evaluate(const RunConfig& cfg) {
  require_artifact(cfg, Stage::transfer, "transfers.jsonl", Stage::evaluate);
  require_artifact(cfg, Stage::classify, "classifier.json", Stage::evaluate);
  ensure_stage_dir(cfg, Stage::evaluate);

  auto transfers = read_transfers_jsonl(artifact_path(cfg, Stage::transfer, "transfers.jsonl"));
  NgramClassifier classifier =
      NgramClassifier::load(artifact_path(cfg, Stage::classify, "classifier.json"));

  EvalInputs in;
  for (const auto& t : transfers) {
    in.sources.push_back(tokenize_simple(t.text));
    in.taggeds.push_back(tokenize_simple(t.tagged));
    in.outputs.push_back(tokenize_simple(t.output));
  }
  in.classifier = &classifier;
  in.target_label = cfg.target_style == 1 ? 1 : 0;
  MetricReport report = evaluate(in);

  nlohmann::json j = nlohmann::json::parse(report.to_json());
  j["aggregation"] = {{"bleu", "corpus"}, {"rouge_l", "sentence-mean"},
                      {"meteor_lite", "sentence-mean"}};
  write_text_file(artifact_path(cfg, Stage::evaluate, "report.json"), j.dump(2) + "\n");
  write_text_file(artifact_path(cfg, Stage::evaluate, "report.txt"), report.to_table());
  write_manifest(cfg, Stage::evaluate,
                 {artifact_path(cfg, Stage::transfer, "transfers.jsonl"),
                  artifact_path(cfg, Stage::classify, "classifier.json")},
                 {"report.json", "report.txt"});
}

void stage_ablate(const RunConfig& cfg) {
  require_artifact(cfg, Stage::classify, "scored0.jsonl", Stage::ablate);
  require_artifact(cfg, Stage::markers, "markers_tgt.tsv", Stage::ablate);
  require_artifact(cfg, Stage::tagdata, "vocab.json", Stage::ablate);
  ensure_stage_dir(cfg, Stage::ablate);

  SplitCorpora sc = load_split_corpora(cfg);
  MarkerSet tgt = markers_from_tsv(
      read_text_file(artifact_path(cfg, Stage::markers, "markers_tgt.tsv")), "target", cfg.k);
  MarkerSet src = markers_from_tsv(
      read_text_file(artifact_path(cfg, Stage::markers, "markers_src.tsv")), "source", cfg.k);
  BpeVocab vocab = BpeVocab::load(artifact_path(cfg, Stage::tagdata, "vocab.json"));
  NgramClassifier classifier =
      NgramClassifier::load(artifact_path(cfg, Stage::classify, "classifier.json"));

  // one generator shared by every tagger variant
  Model generator(model_config_for(cfg, vocab, "generator"));
  {
    auto gen_pairs = make_generator_pairs(sc.tgt_train_p9, tgt, cfg.tag_budget);
    TrainConfig tc = train_config_for(cfg, Stage::ablate, "generator");
    tc.checkpoint_dir.clear();
    NoiseConfig nc{cfg.noise_shuffle, cfg.noise_drop, cfg.noise_replace};
    train_model(generator, vocab, gen_pairs, tc, cfg.noise ? &nc : nullptr);
  }

  BeamConfig bc;
  bc.beam = cfg.beam;
  bc.length_norm = cfg.length_norm;

  nlohmann::json out;
  for (const std::string mode : {"add", "replace", "combined"}) {
    auto pairs = build_tagger_pairs(cfg, sc, src, tgt, mode);
    if (pairs.empty()) {
      out[mode] = {{"error", "no training pairs for this variant"}};
      continue;
    }
    Model tagger(model_config_for(cfg, vocab, "tagger"));
    TrainConfig tc = train_config_for(cfg, Stage::ablate, std::string("tagger_") + mode);
    tc.checkpoint_dir.clear();
    train_model(tagger, vocab, pairs, tc, nullptr);

    EvalInputs in;
    in.classifier = &classifier;
    in.target_label = cfg.target_style == 1 ? 1 : 0;
    std::string dump;
    for (const auto& s : sc.src_test.sentences) {
      TransferResult r = transfer(tagger, generator, vocab, s, bc);
      in.sources.push_back(s.tokens);
      in.taggeds.push_back(r.tagged.tokens);
      in.outputs.push_back(r.output.tokens);
      nlohmann::json t;
      t["text"] = detokenize(s);
      t["tagged"] = detokenize(r.tagged.tokens);
      t["output"] = detokenize(r.output.tokens);
      dump += t.dump();
      dump += '\n';
    }
    write_text_file(artifact_path(cfg, Stage::ablate, "transfers_" + std::string(mode) + ".jsonl"),
                    dump);
    MetricReport report = evaluate(in);
    nlohmann::json var = nlohmann::json::parse(report.to_json());
    OpMix mix = classify_operations(in.sources, in.taggeds);
    var["op_mix"] = {{"add_ops", mix.add_ops},
                     {"replace_ops", mix.replace_ops},
                     {"add_fraction", mix.add_fraction()}};
    out[mode] = var;
  }
  write_text_file(artifact_path(cfg, Stage::ablate, "ablation.json"), out.dump(2) + "\n");
  write_manifest(cfg, Stage::ablate,
                 {artifact_path(cfg, Stage::tagdata, "vocab.json"),
                  artifact_path(cfg, Stage::classify, "scored0.jsonl")},
                 {"ablation.json"});
}

}  // namespace

void run_pipeline(const RunConfig& cfg, Stage stage) {
  cfg.validate();
  WorkDirLock lock(cfg.work_dir);
  auto run_one = [&](Stage s) {
    switch (s) {
      case Stage::preprocess: stage_preprocess(cfg); break;
      case Stage::classify: stage_classify(cfg); break;
      case Stage::markers: stage_markers(cfg); break;
      case Stage::tagdata: stage_tagdata(cfg); break;
      case Stage::train_tagger: train_stage(cfg, Stage::train_tagger, "tagger",
                                            "tagger_pairs.tsv"); break;
      case Stage::train_generator: train_stage(cfg, Stage::train_generator, "generator",
                                               "generator_pairs.tsv"); break;
      case Stage::transfer: stage_transfer(cfg); break;
      case Stage::evaluate: stage_evaluate(cfg); break;
      case Stage::ablate: stage_ablate(cfg); break;
      case Stage::all: break;
    }
  };
  if (stage == Stage::all) {
    for (Stage s : {Stage::preprocess, Stage::classify, Stage::markers, Stage::tagdata,
                    Stage::train_tagger, Stage::train_generator, Stage::transfer,
                    Stage::evaluate})
      run_one(s);
  } else {
    run_one(stage);
  }
}

std::vector<ScoredRecord> read_scored_jsonl(const std::string& path) {
  std::vector<ScoredRecord> records;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ScoredRecord r;
    r.sentence.raw = j.at("text").get<std::string>();
    r.sentence.tokens = j.at("tokens").get<std::vector<std::string>>();
    r.score = j.at("score").get<double>();
    r.bucket = j.at("bucket").get<int>();
    r.split = split_from_name(j.at("split").get<std::string>());
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<TransferRecord> read_transfers_jsonl(const std::string& path) {
  std::vector<TransferRecord> records;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    records.push_back({j.at("text").get<std::string>(), j.at("tagged").get<std::string>(),
                       j.at("output").get<std::string>()});
  }
  return records;
}

MetricReport read_report_json(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  MetricReport r;
  r.acc = j.at("acc").get<double>();
  r.bleu_self = j.at("bleu_self").get<double>();
  if (!j.at("bleu_ref").is_null()) r.bleu_ref = j.at("bleu_ref").get<double>();
  r.rouge_l = j.at("rouge_l").get<double>();
  r.meteor_lite = j.at("meteor_lite").get<double>();
  r.nontag_change_frac = j.at("nontag_change_frac").get<double>();
  r.n = j.at("n").get<std::size_t>();
  return r;
}

}  // namespace styletag
