#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "styletag/common.hpp"

namespace styletag {

// Per-n-gram style-impact statistics, direction source -> target:
// eta is the ratio of mean tf-idf in the target corpus over the source
// corpus; p is the smoothed, normalized impact distribution.
struct NgramStats {
  std::string ngram;
  double mean_tfidf_src = 0.0;
  double mean_tfidf_tgt = 0.0;
  double eta = 0.0;
  double p = 0.0;
};

struct MarkerSet {
  std::string style_id;
  double k = 0.9;
  // phrase -> (eta, p) with p renormalized over the kept phrases
  std::map<std::string, std::pair<double, double>> phrases;
  bool empty_warning = false;

  bool contains(const std::string& phrase) const { return phrases.count(phrase) > 0; }
  double impact(const std::string& phrase) const {
    auto it = phrases.find(phrase);
    return it == phrases.end() ? 0.0 : it->second.second;
  }
  double max_impact() const;
  std::size_t max_phrase_len() const;  // in tokens
};

// Document frequencies over the union of both corpora, sentences as
// documents, for n-gram orders nmin..nmax.
struct DocFreqTable {
  std::unordered_map<std::string, std::size_t> df;
  std::size_t total_docs = 0;
  int nmin = 1;
  int nmax = 4;
};

DocFreqTable build_doc_freq(const StyleCorpus& a, const StyleCorpus& b, int nmin, int nmax);

// tf-idf(w, s) = count(w in s) * (ln(D / (1 + df(w))) + 1)
double tfidf(const std::string& ngram, const Sentence& s, const DocFreqTable& table);

// Style impact for every n-gram present in BOTH corpora, sorted by p
// descending (ties by phrase). Direction src -> tgt: eta(w) =
// mean tf-idf over tgt / mean tf-idf over src, p(w) = eta^gamma
// normalized over the shared n-grams.
std::vector<NgramStats> style_impact(const StyleCorpus& src, const StyleCorpus& tgt,
                                     int nmin, int nmax, double gamma);

// Keep the top (1-k) fraction of the p-descending ranking (k=0.9 keeps
// the top 10%) and renormalize the member distribution.
MarkerSet extract_markers(const std::vector<NgramStats>& stats, double k,
                          const std::string& style_id);

// TSV: phrase \t eta \t p, sorted by p descending.
std::string markers_to_tsv(const MarkerSet& m);
MarkerSet markers_from_tsv(const std::string& text, const std::string& style_id, double k);

}  // namespace styletag
