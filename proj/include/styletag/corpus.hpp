#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "styletag/common.hpp"

namespace styletag {

enum class Split { train, test, dev };

const char* split_name(Split s);

struct ScoredSentence {
  Sentence sentence;
  double score;
};

struct ScoredBucket {
  int bucket_index;  // 0..9
  Split split;
  std::vector<ScoredSentence> sentences;
};

// Counts of sentences rejected per cleaning rule, reported in run manifests.
struct FilterCounts {
  std::size_t too_short = 0;
  std::size_t too_numeric = 0;
  std::size_t email = 0;
  std::size_t spurious = 0;
  std::size_t duplicate = 0;
  std::size_t kept = 0;
};

// Lowercase, tokenize on whitespace, and apply the pruning rules:
// fewer than 3 tokens, >=80% numerical tokens, an email-address token,
// or a run of >=3 identical non-alphanumeric characters all reject the
// line. Returns nullopt on rejection.
std::optional<Sentence> clean_sentence(const std::string& raw);

// Same, but reports which rule fired.
std::optional<Sentence> clean_sentence(const std::string& raw, FilterCounts& counts);

// One sentence per line. Cleans every line, drops exact duplicates
// (post-cleaning token lists), keeps first-occurrence order.
StyleCorpus ingest_corpus(const std::string& path, const std::string& style_id,
                          FilterCounts* counts = nullptr);

StyleCorpus corpus_from_lines(const std::vector<std::string>& lines, const std::string& style_id,
                              FilterCounts* counts = nullptr);

using StyleScorer = std::function<double(const Sentence&)>;

// Score every sentence, assign bucket floor(10*score) clamped to 9, then
// split each bucket train/test/dev in an 80:10:10 ratio after a seeded
// shuffle. Returns one ScoredBucket per (bucket, split) that is non-empty.
std::vector<ScoredBucket> bucket_by_score(const StyleCorpus& corpus, const StyleScorer& scorer,
                                          uint64_t seed);

// The train split of bucket 9: the target-style training corpus.
StyleCorpus target_style_train_set(const std::vector<ScoredBucket>& buckets);

// All sentences of one split, buckets pooled, bucket-then-shuffle order.
StyleCorpus split_corpus(const std::vector<ScoredBucket>& buckets, Split split,
                         const std::string& style_id);

}  // namespace styletag
