#pragma once

#include <optional>
#include <string>
#include <vector>

#include "styletag/classifier.hpp"
#include "styletag/common.hpp"

namespace styletag {

struct MetricReport {
  double acc = 0.0;            // transfer accuracy, [0,1]
  double bleu_self = 0.0;      // [0,100]
  std::optional<double> bleu_ref;
  double rouge_l = 0.0;        // [0,100]
  double meteor_lite = 0.0;    // [0,100]
  double nontag_change_frac = 0.0;
  std::size_t n = 0;

  std::string to_json() const;
  std::string to_table() const;  // aligned Acc / BL-s / BL-r / MET / ROU row
};

using TokenList = std::vector<std::string>;

// Corpus-level BLEU up to max_n, uniform weights, brevity penalty.
// Smoothing: orders >= 2 with a zero raw match count get +1 added to
// both numerator and denominator.
double bleu(const std::vector<TokenList>& candidates,
            const std::vector<std::vector<TokenList>>& references_per_candidate, int max_n = 4);
double bleu_single_ref(const std::vector<TokenList>& candidates,
                       const std::vector<TokenList>& references, int max_n = 4);

// Mean sentence-level ROUGE-L F1 (beta = 1).
double rouge_l(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references);

// Two-stage unigram alignment (exact, then suffix-stemmed), 9:1
// recall-weighted F-mean, fragmentation penalty 0.5*((chunks-1)/m)^3.
// No synonym stage.
double meteor_lite(const std::vector<TokenList>& candidates,
                   const std::vector<TokenList>& references);

std::string stem_lite(const std::string& word);

// Appends the polarizing suffix for the requested target label.
Sentence naive_baseline(const Sentence& s, int target_label);

// Fraction of sentences whose tagged-form non-tag tokens are not a
// sub-multiset of the output tokens.
double nontag_change_audit(const std::vector<TokenList>& sources,
                           const std::vector<TokenList>& taggeds,
                           const std::vector<TokenList>& outputs);

struct EvalInputs {
  std::vector<TokenList> sources;
  std::vector<TokenList> outputs;
  std::vector<TokenList> taggeds;                 // may be empty: audit reported as 0
  std::vector<TokenList> references;              // optional, empty = no BL-r
  const NgramClassifier* classifier = nullptr;
  int target_label = 1;
};

MetricReport evaluate(const EvalInputs& in);

// Ablation support: classifies a transfer as an add or replace
// operation. removed counts source tokens missing from the tagged
// form's non-tag tokens (multiset difference).
struct OpMix {
  std::size_t add_ops = 0;
  std::size_t replace_ops = 0;

  double add_fraction() const {
    std::size_t total = add_ops + replace_ops;
    return total == 0 ? 0.0 : double(add_ops) / double(total);
  }
};

OpMix classify_operations(const std::vector<TokenList>& sources,
                          const std::vector<TokenList>& taggeds);

}  // namespace styletag
