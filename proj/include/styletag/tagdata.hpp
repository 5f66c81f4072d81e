#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "styletag/common.hpp"
#include "styletag/markers.hpp"

namespace styletag {

// A matched style-attribute phrase inside a sentence, [start, end).
struct AttributeSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string phrase;
  double p = 0.0;
};

// Surface form with positional tag tokens. Tag index t is the 0-based
// ordinal of the tag counted left to right, clamped to tag_budget-1.
struct TaggedSentence {
  std::vector<std::string> tokens;
  struct TagRef {
    int t = 0;
    std::optional<AttributeSpan> source_span;
  };
  std::vector<TagRef> tags;

  std::vector<std::string> tokens_without_tags() const;
};

enum class PairMode { replace, add, generator };

const char* pair_mode_name(PairMode m);
PairMode pair_mode_from_name(const std::string& name);

struct ParallelPair {
  std::vector<std::string> input;
  std::vector<std::string> output;
  PairMode mode = PairMode::replace;
};

inline constexpr double kReplaceAll = std::numeric_limits<double>::infinity();

bool is_tag_token(const std::string& token);

// Greedy longest-match scan, left to right; matches never overlap.
std::vector<AttributeSpan> match_markers(const Sentence& s, const MarkerSet& markers);

// Tagger training data, replace mode: input is the source sentence,
// output replaces matched spans with positional tags. Each span is
// replaced independently with probability min(1, scale * p/max_p);
// scale = kReplaceAll replaces every span. Zero-match sentences become
// identity pairs.
std::vector<ParallelPair> make_replace_pairs(const StyleCorpus& src, const MarkerSet& markers,
                                             double sample_prob_scale, uint64_t seed,
                                             int tag_budget);

// Tagger training data, add mode: only marker-bearing target-style
// sentences are used; input deletes the matched spans, output replaces
// them with positional tags.
std::vector<ParallelPair> make_add_pairs(const StyleCorpus& tgt, const MarkerSet& markers,
                                         int tag_budget);

// Generator training data: input is the tagged form (replace-all),
// output the original sentence. Markerless sentences stay as identity
// pairs so the generator learns to pass untagged text through.
std::vector<ParallelPair> make_generator_pairs(const StyleCorpus& corpus,
                                               const MarkerSet& markers, int tag_budget);

// Concatenates and deterministically shuffles the two pair lists.
std::vector<ParallelPair> make_combined_pairs(const std::vector<ParallelPair>& add,
                                              const std::vector<ParallelPair>& replace,
                                              uint64_t seed);

// Rebuilds the tag structure from a surface token sequence.
TaggedSentence parse_tagged(const std::vector<std::string>& tokens);

std::string pairs_to_tsv(const std::vector<ParallelPair>& pairs);
std::vector<ParallelPair> pairs_from_tsv(const std::string& text);

}  // namespace styletag
