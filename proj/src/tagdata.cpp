#include "styletag/tagdata.hpp"

#include <algorithm>
#include <sstream>

#include "styletag/bpe.hpp"

namespace styletag {

const char* pair_mode_name(PairMode m) {
  switch (m) {
    case PairMode::replace: return "replace";
    case PairMode::add: return "add";
    case PairMode::generator: return "generator";
  }
  return "?";
}

PairMode pair_mode_from_name(const std::string& name) {
  if (name == "replace") return PairMode::replace;
  if (name == "add") return PairMode::add;
  if (name == "generator") return PairMode::generator;
  throw LoadError("unknown pair mode: " + name);
}

bool is_tag_token(const std::string& token) {
  return BpeVocab::parse_tag_surface(token).has_value();
}

std::vector<std::string> TaggedSentence::tokens_without_tags() const {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (!is_tag_token(t)) out.push_back(t);
  return out;
}

std::vector<AttributeSpan> match_markers(const Sentence& s, const MarkerSet& markers) {
  std::vector<AttributeSpan> spans;
  if (markers.phrases.empty()) return spans;
  std::size_t max_len = markers.max_phrase_len();
  const auto& toks = s.tokens;
  std::size_t i = 0;
  while (i < toks.size()) {
    bool matched = false;
    std::size_t longest = std::min(max_len, toks.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      std::string phrase = toks[i];
      for (std::size_t j = 1; j < len; ++j) {
        phrase += ' ';
        phrase += toks[i + j];
      }
      auto it = markers.phrases.find(phrase);
      if (it != markers.phrases.end()) {
        spans.push_back({i, i + len, phrase, it->second.second});
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return spans;
}

namespace {

int clamp_tag(int ordinal, int tag_budget) { return std::min(ordinal, tag_budget - 1); }

// Replace the given spans with positional tags; ordinal indices count
// tags left to right.
std::vector<std::string> tag_out_spans(const std::vector<std::string>& toks,
                                       const std::vector<AttributeSpan>& spans,
                                       int tag_budget) {
  std::vector<std::string> out;
  std::size_t si = 0;
  int ordinal = 0;
  for (std::size_t i = 0; i < toks.size();) {
    if (si < spans.size() && spans[si].start == i) {
      out.push_back(BpeVocab::tag_surface(clamp_tag(ordinal++, tag_budget)));
      i = spans[si].end;
      ++si;
    } else {
      out.push_back(toks[i]);
      ++i;
    }
  }
  return out;
}

std::vector<std::string> delete_spans(const std::vector<std::string>& toks,
                                      const std::vector<AttributeSpan>& spans) {
  std::vector<std::string> out;
  std::size_t si = 0;
  for (std::size_t i = 0; i < toks.size();) {
    if (si < spans.size() && spans[si].start == i) {
      i = spans[si].end;
      ++si;
    } else {
      out.push_back(toks[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

std::vector<ParallelPair> make_replace_pairs(const StyleCorpus& src, const MarkerSet& markers,
                                             double sample_prob_scale, uint64_t seed,
                                             int tag_budget) {
  std::vector<ParallelPair> pairs;
  pairs.reserve(src.size());
  Rng rng(seed);
  double max_p = markers.max_impact();
  for (const auto& s : src.sentences) {
    auto spans = match_markers(s, markers);
    std::vector<AttributeSpan> chosen;
    if (sample_prob_scale == kReplaceAll) {
      chosen = spans;
    } else {
      for (const auto& sp : spans) {
        double prob = max_p > 0.0 ? std::min(1.0, sample_prob_scale * sp.p / max_p) : 0.0;
        if (rng.uniform() < prob) chosen.push_back(sp);
      }
    }
    ParallelPair pair;
    pair.mode = PairMode::replace;
    pair.input = s.tokens;
    pair.output = tag_out_spans(s.tokens, chosen, tag_budget);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<ParallelPair> make_add_pairs(const StyleCorpus& tgt, const MarkerSet& markers,
                                         int tag_budget) {
  std::vector<ParallelPair> pairs;
  for (const auto& s : tgt.sentences) {
    auto spans = match_markers(s, markers);
    if (spans.empty()) continue;
    ParallelPair pair;
    pair.mode = PairMode::add;
    pair.input = delete_spans(s.tokens, spans);
    pair.output = tag_out_spans(s.tokens, spans, tag_budget);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<ParallelPair> make_generator_pairs(const StyleCorpus& corpus,
                                               const MarkerSet& markers, int tag_budget) {
  std::vector<ParallelPair> pairs;
  pairs.reserve(corpus.size());
  for (const auto& s : corpus.sentences) {
    auto spans = match_markers(s, markers);
    ParallelPair pair;
    pair.mode = PairMode::generator;
    pair.input = tag_out_spans(s.tokens, spans, tag_budget);
    pair.output = s.tokens;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<ParallelPair> make_combined_pairs(const std::vector<ParallelPair>& add,
                                              const std::vector<ParallelPair>& replace,
                                              uint64_t seed) {
  std::vector<ParallelPair> out;
  out.reserve(add.size() + replace.size());
  out.insert(out.end(), add.begin(), add.end());
  out.insert(out.end(), replace.begin(), replace.end());
  Rng rng(seed);
  rng.shuffle(out);
  return out;
}

TaggedSentence parse_tagged(const std::vector<std::string>& tokens) {
  TaggedSentence ts;
  ts.tokens = tokens;
  for (const auto& tok : tokens) {
    if (auto t = BpeVocab::parse_tag_surface(tok)) ts.tags.push_back({*t, std::nullopt});
  }
  return ts;
}

std::string pairs_to_tsv(const std::vector<ParallelPair>& pairs) {
  std::ostringstream out;
  for (const auto& p : pairs)
    out << detokenize(p.input) << '\t' << detokenize(p.output) << '\t' << pair_mode_name(p.mode)
        << '\n';
  return out.str();
}

std::vector<ParallelPair> pairs_from_tsv(const std::string& text) {
  std::vector<ParallelPair> pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw LoadError("pair TSV line " + std::to_string(lineno) + " needs 3 columns");
    auto split_ws = [](const std::string& s) {
      std::vector<std::string> toks;
      std::istringstream ss(s);
      std::string t;
      while (ss >> t) toks.push_back(t);
      return toks;
    };
    ParallelPair p;
    p.input = split_ws(line.substr(0, t1));
    p.output = split_ws(line.substr(t1 + 1, t2 - t1 - 1));
    p.mode = pair_mode_from_name(line.substr(t2 + 1));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace styletag
