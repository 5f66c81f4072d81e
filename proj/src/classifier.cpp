#include "styletag/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

namespace styletag {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void collect_ngrams(const Sentence& s, int nmin, int nmax,
                    std::map<std::string, double>& out) {
  const auto& toks = s.tokens;
  for (int n = nmin; n <= nmax; ++n) {
    if (static_cast<std::size_t>(n) > toks.size()) break;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::string key = toks[i];
      for (int j = 1; j < n; ++j) {
        key += ' ';
        key += toks[i + j];
      }
      out[key] += 1.0;
    }
  }
}

}  // namespace

std::map<std::string, double> NgramClassifier::features(const Sentence& s) const {
  std::map<std::string, double> f;
  collect_ngrams(s, ngram_min_, ngram_max_, f);
  return f;
}

NgramClassifier NgramClassifier::train(const StyleCorpus& neg, const StyleCorpus& pos,
                                       const ClassifierConfig& cfg) {
  if (neg.empty() || pos.empty())
    throw EmptyCorpusError("classifier training requires two non-empty corpora");
  if (cfg.ngram_min < 1 || cfg.ngram_max < cfg.ngram_min)
    throw ConfigError("invalid classifier n-gram range");

  NgramClassifier c;
  c.ngram_min_ = cfg.ngram_min;
  c.ngram_max_ = cfg.ngram_max;

  struct Example {
    std::vector<std::pair<std::size_t, double>> feats;  // feature index, count
    int label;
  };

  // feature index table, insertion order = first occurrence
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> names;
  std::vector<Example> examples;
  auto add = [&](const StyleCorpus& corpus, int label) {
    for (const auto& s : corpus.sentences) {
      std::map<std::string, double> f;
      collect_ngrams(s, cfg.ngram_min, cfg.ngram_max, f);
      Example ex;
      ex.label = label;
      for (const auto& [k, v] : f) {
        auto it = index.find(k);
        std::size_t id;
        if (it == index.end()) {
          id = names.size();
          index.emplace(k, id);
          names.push_back(k);
        } else {
          id = it->second;
        }
        ex.feats.emplace_back(id, v);
      }
      examples.push_back(std::move(ex));
    }
  };
  add(neg, 0);
  add(pos, 1);

  std::vector<double> w(names.size(), 0.0);
  double b = 0.0;
  const double inv_n = 1.0 / double(examples.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> gw(w.size(), 0.0);
    double gb = 0.0;
    double loss = 0.0;
    for (const auto& ex : examples) {
      double z = b;
      for (const auto& [id, v] : ex.feats) z += w[id] * v;
      double p = sigmoid(z);
      double err = p - ex.label;
      gb += err;
      for (const auto& [id, v] : ex.feats) gw[id] += err * v;
      // clamped log for numerical safety
      double pc = std::min(1.0 - 1e-12, std::max(1e-12, p));
      loss += ex.label ? -std::log(pc) : -std::log(1.0 - pc);
    }
    loss *= inv_n;
    for (std::size_t i = 0; i < w.size(); ++i) loss += 0.5 * cfg.l2 * w[i] * w[i];
    c.epoch_losses_.push_back(loss);

    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] -= cfg.lr * (gw[i] * inv_n + cfg.l2 * w[i]);
    b -= cfg.lr * gb * inv_n;
  }

  c.bias_ = b;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (w[i] != 0.0) c.weights_[names[i]] = w[i];
  return c;
}

double NgramClassifier::score(const Sentence& s) const {
  std::map<std::string, double> f;
  collect_ngrams(s, ngram_min_, ngram_max_, f);
  double z = bias_;
  for (const auto& [k, v] : f) {
    auto it = weights_.find(k);
    if (it != weights_.end()) z += it->second * v;
  }
  return sigmoid(z);
}

double NgramClassifier::weight(const std::string& ngram) const {
  auto it = weights_.find(ngram);
  return it == weights_.end() ? 0.0 : it->second;
}

double NgramClassifier::transfer_accuracy(const std::vector<Sentence>& outputs,
                                          int target_label) const {
  if (outputs.empty()) throw EmptyCorpusError("transfer_accuracy on empty output list");
  std::size_t hits = 0;
  for (const auto& s : outputs)
    if (predict(s) == target_label) ++hits;
  return double(hits) / double(outputs.size());
}

std::string NgramClassifier::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["ngram_min"] = ngram_min_;
  j["ngram_max"] = ngram_max_;
  j["bias"] = bias_;
  j["weights"] = weights_;
  j["label_map"] = {{"0", "source"}, {"1", "target"}};
  return j.dump(2) + "\n";
}

NgramClassifier NgramClassifier::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw LoadError(std::string("classifier JSON parse error: ") + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw LoadError("unsupported classifier version");
  NgramClassifier c;
  c.ngram_min_ = j.at("ngram_min").get<int>();
  c.ngram_max_ = j.at("ngram_max").get<int>();
  c.bias_ = j.at("bias").get<double>();
  c.weights_ = j.at("weights").get<std::map<std::string, double>>();
  return c;
}

void NgramClassifier::save(const std::string& path) const { write_text_file(path, to_json()); }

NgramClassifier NgramClassifier::load(const std::string& path) {
  return from_json(read_text_file(path));
}

}  // namespace styletag
