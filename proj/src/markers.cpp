#include "styletag/markers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace styletag {

namespace {

std::string join_ngram(const std::vector<std::string>& toks, std::size_t i, int n) {
  std::string key = toks[i];
  for (int j = 1; j < n; ++j) {
    key += ' ';
    key += toks[i + j];
  }
  return key;
}

template <typename F>
void for_each_ngram(const Sentence& s, int nmin, int nmax, F&& f) {
  for (int n = nmin; n <= nmax; ++n) {
    if (static_cast<std::size_t>(n) > s.tokens.size()) break;
    for (std::size_t i = 0; i + n <= s.tokens.size(); ++i) f(join_ngram(s.tokens, i, n));
  }
}

std::size_t ngram_token_count(const std::string& phrase) {
  return static_cast<std::size_t>(std::count(phrase.begin(), phrase.end(), ' ')) + 1;
}

}  // namespace

double MarkerSet::max_impact() const {
  double best = 0.0;
  for (const auto& [_, ep] : phrases) best = std::max(best, ep.second);
  return best;
}

std::size_t MarkerSet::max_phrase_len() const {
  std::size_t best = 0;
  for (const auto& [phrase, _] : phrases) best = std::max(best, ngram_token_count(phrase));
  return best;
}

DocFreqTable build_doc_freq(const StyleCorpus& a, const StyleCorpus& b, int nmin, int nmax) {
  DocFreqTable table;
  table.nmin = nmin;
  table.nmax = nmax;
  table.total_docs = a.size() + b.size();
  std::unordered_map<std::string, std::size_t> last_doc;
  std::size_t doc = 0;
  for (const StyleCorpus* c : {&a, &b}) {
    for (const auto& s : c->sentences) {
      ++doc;
      for_each_ngram(s, nmin, nmax, [&](const std::string& key) {
        auto [it, fresh] = last_doc.emplace(key, doc);
        if (fresh || it->second != doc) {
          it->second = doc;
          ++table.df[key];
        }
      });
    }
  }
  return table;
}

double tfidf(const std::string& ngram, const Sentence& s, const DocFreqTable& table) {
  int n = static_cast<int>(ngram_token_count(ngram));
  std::size_t count = 0;
  if (static_cast<std::size_t>(n) <= s.tokens.size()) {
    for (std::size_t i = 0; i + n <= s.tokens.size(); ++i)
      if (join_ngram(s.tokens, i, n) == ngram) ++count;
  }
  if (count == 0) return 0.0;
  auto it = table.df.find(ngram);
  std::size_t df = it == table.df.end() ? 0 : it->second;
  double idf = std::log(double(table.total_docs) / double(1 + df)) + 1.0;
  return double(count) * idf;
}

std::vector<NgramStats> style_impact(const StyleCorpus& src, const StyleCorpus& tgt,
                                     int nmin, int nmax, double gamma) {
  if (src.empty() || tgt.empty())
    throw EmptyCorpusError("style_impact requires two non-empty corpora");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");

  DocFreqTable table = build_doc_freq(src, tgt, nmin, nmax);

  // accumulate per-corpus tf-idf sums in one pass each
  auto accumulate = [&](const StyleCorpus& c, std::unordered_map<std::string, double>& sums) {
    for (const auto& s : c.sentences) {
      std::unordered_map<std::string, std::size_t> counts;
      for_each_ngram(s, nmin, nmax, [&](const std::string& key) { ++counts[key]; });
      for (const auto& [key, count] : counts) {
        double idf = std::log(double(table.total_docs) / double(1 + table.df.at(key))) + 1.0;
        sums[key] += double(count) * idf;
      }
    }
  };
  std::unordered_map<std::string, double> sum_src, sum_tgt;
  accumulate(src, sum_src);
  accumulate(tgt, sum_tgt);

  std::vector<NgramStats> stats;
  for (const auto& [key, s_tgt] : sum_tgt) {
    auto it = sum_src.find(key);
    if (it == sum_src.end()) continue;  // only n-grams present in both corpora
    NgramStats st;
    st.ngram = key;
    st.mean_tfidf_src = it->second / double(src.size());
    st.mean_tfidf_tgt = s_tgt / double(tgt.size());
    st.eta = st.mean_tfidf_tgt / st.mean_tfidf_src;
    stats.push_back(std::move(st));
  }
  if (stats.empty()) return stats;

  double denom = 0.0;
  for (auto& st : stats) denom += std::pow(st.eta, gamma);
  for (auto& st : stats) st.p = std::pow(st.eta, gamma) / denom;

  std::sort(stats.begin(), stats.end(), [](const NgramStats& a, const NgramStats& b) {
    if (a.p != b.p) return a.p > b.p;
    return a.ngram < b.ngram;
  });
  return stats;
}

MarkerSet extract_markers(const std::vector<NgramStats>& stats, double k,
                          const std::string& style_id) {
  MarkerSet m;
  m.style_id = style_id;
  m.k = k;
  double frac = 1.0 - k;
  std::size_t keep = 0;
  if (frac > 0.0)
    keep = static_cast<std::size_t>(std::ceil(frac * double(stats.size())));
  keep = std::min(keep, stats.size());

  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += stats[i].p;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& st = stats[i];
    m.phrases[st.ngram] = {st.eta, mass > 0.0 ? st.p / mass : 0.0};
  }
  m.empty_warning = m.phrases.empty();
  return m;
}

std::string markers_to_tsv(const MarkerSet& m) {
  std::vector<std::pair<std::string, std::pair<double, double>>> rows(m.phrases.begin(),
                                                                      m.phrases.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.second != b.second.second) return a.second.second > b.second.second;
    return a.first < b.first;
  });
  std::ostringstream out;
  out.precision(17);
  for (const auto& [phrase, ep] : rows)
    out << phrase << '\t' << ep.first << '\t' << ep.second << '\n';
  return out.str();
}

MarkerSet markers_from_tsv(const std::string& text, const std::string& style_id, double k) {
  MarkerSet m;
  m.style_id = style_id;
  m.k = k;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw LoadError("marker TSV line " + std::to_string(lineno) + " needs 3 columns");
    std::string phrase = line.substr(0, t1);
    double eta = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
    double p = std::stod(line.substr(t2 + 1));
    m.phrases[phrase] = {eta, p};
  }
  m.empty_warning = m.phrases.empty();
  return m;
}

}  // namespace styletag
