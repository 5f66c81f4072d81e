#pragma once

#include <map>
#include <string>
#include <vector>

#include "styletag/common.hpp"

namespace styletag {

struct ClassifierConfig {
  int ngram_min = 1;
  int ngram_max = 2;
  int epochs = 200;
  double lr = 0.5;
  double l2 = 1e-4;
};

// Bag-of-n-grams logistic regression. Label 1 is the target style.
class NgramClassifier {
 public:
  NgramClassifier() = default;

  // Full-batch gradient descent on the cross-entropy with L2 penalty.
  // neg carries label 0, pos label 1. Deterministic.
  static NgramClassifier train(const StyleCorpus& neg, const StyleCorpus& pos,
                               const ClassifierConfig& cfg = {});

  // P(label 1 | sentence), always in [0,1].
  double score(const Sentence& s) const;

  // argmax label with the 0.5 tie counting as label 1
  int predict(const Sentence& s) const { return score(s) >= 0.5 ? 1 : 0; }

  // Fraction of outputs classified into the target style.
  double transfer_accuracy(const std::vector<Sentence>& outputs, int target_label) const;

  double weight(const std::string& ngram) const;
  double bias() const { return bias_; }
  const std::map<std::string, double>& weights() const { return weights_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

  std::map<std::string, double> features(const Sentence& s) const;

  std::string to_json() const;
  static NgramClassifier from_json(const std::string& text);
  void save(const std::string& path) const;
  static NgramClassifier load(const std::string& path);

 private:
  int ngram_min_ = 1;
  int ngram_max_ = 2;
  double bias_ = 0.0;
  std::map<std::string, double> weights_;
  std::vector<double> epoch_losses_;
};

}  // namespace styletag
