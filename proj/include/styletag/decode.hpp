#pragma once

#include <string>
#include <vector>

#include "styletag/bpe.hpp"
#include "styletag/model.hpp"
#include "styletag/tagdata.hpp"

namespace styletag {

struct Hypothesis {
  std::vector<TokenId> ids;  // emitted tokens; finished ones end with EOS
  double logprob = 0.0;
  bool finished = false;

  int emitted() const { return int(ids.size()); }
};

struct BeamConfig {
  int beam = 5;
  int max_len = 0;           // 0 = 1.5 * input length + 5
  double length_norm = 0.0;  // exponent alpha; 0 disables
};

// Length-capped beam search; returns finished and expired hypotheses
// together, sorted by (length-normalized) log probability.
std::vector<Hypothesis> beam_search(const Model& model, const std::vector<TokenId>& input_ids,
                                    const BeamConfig& cfg);

// Tagger re-ranking: finished first, then more tag tokens, then higher
// log probability. Returns the winner.
Hypothesis rerank_tagged(const std::vector<Hypothesis>& hyps, const BpeVocab& vocab);

int count_tag_tokens(const std::vector<TokenId>& ids, const BpeVocab& vocab);

struct TransferResult {
  TaggedSentence tagged;
  Sentence output;
  bool tagger_truncated = false;
  bool generator_truncated = false;
};

// Full pipeline for one sentence: tag, re-rank, generate. Both stages'
// surface forms are returned.
TransferResult transfer(const Model& tagger, const Model& generator, const BpeVocab& vocab,
                        const Sentence& s, const BeamConfig& cfg);

}  // namespace styletag
