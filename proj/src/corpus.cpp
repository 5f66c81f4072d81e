#include "styletag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

namespace styletag {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::dev: return "dev";
  }
  return "?";
}

namespace {

bool is_numeric_token(const std::string& t) {
  bool has_digit = false;
  for (unsigned char c : t) {
    if (std::isdigit(c)) {
      has_digit = true;
    } else if (c != '.' && c != ',') {
      return false;
    }
  }
  return has_digit;
}

// local-part@domain.tld, domain labels non-empty
bool is_email_token(const std::string& t) {
  auto at = t.find('@');
  if (at == std::string::npos || at == 0 || at + 1 >= t.size()) return false;
  if (t.find('@', at + 1) != std::string::npos) return false;
  std::string domain = t.substr(at + 1);
  auto dot = domain.find('.');
  if (dot == std::string::npos) return false;
  // every dot-separated label must be non-empty
  std::size_t start = 0;
  while (true) {
    auto next = domain.find('.', start);
    std::size_t len = (next == std::string::npos ? domain.size() : next) - start;
    if (len == 0) return false;
    if (next == std::string::npos) break;
    start = next + 1;
  }
  return true;
}

// >=3 consecutive identical non-alphanumeric characters ("!!!!", "----").
// Whitespace runs are token separators, not artifacts, and don't count.
bool has_spurious_run(const std::string& s) {
  std::size_t run = 1;
  for (std::size_t i = 1; i < s.size(); ++i) {
    unsigned char c = s[i];
    if (c == static_cast<unsigned char>(s[i - 1]) && !std::isalnum(c) && !std::isspace(c)) {
      if (++run >= 3) return true;
    } else {
      run = 1;
    }
  }
  return false;
}

std::vector<std::string> tokenize_lower(const std::string& raw) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

}  // namespace

std::optional<Sentence> clean_sentence(const std::string& raw, FilterCounts& counts) {
  std::vector<std::string> tokens = tokenize_lower(raw);
  if (tokens.size() < 3) {
    ++counts.too_short;
    return std::nullopt;
  }
  std::size_t numeric = 0;
  for (const auto& t : tokens) {
    if (is_email_token(t)) {
      ++counts.email;
      return std::nullopt;
    }
    if (is_numeric_token(t)) ++numeric;
  }
  if (double(numeric) >= 0.8 * double(tokens.size())) {
    ++counts.too_numeric;
    return std::nullopt;
  }
  if (has_spurious_run(raw)) {
    ++counts.spurious;
    return std::nullopt;
  }
  ++counts.kept;
  Sentence s;
  s.tokens = std::move(tokens);
  s.raw = raw;
  return s;
}

std::optional<Sentence> clean_sentence(const std::string& raw) {
  FilterCounts scratch;
  return clean_sentence(raw, scratch);
}

StyleCorpus corpus_from_lines(const std::vector<std::string>& lines, const std::string& style_id,
                              FilterCounts* counts) {
  FilterCounts local;
  FilterCounts& fc = counts ? *counts : local;
  StyleCorpus corpus;
  corpus.style_id = style_id;
  std::unordered_set<std::string> seen;
  for (const auto& line : lines) {
    auto cleaned = clean_sentence(line, fc);
    if (!cleaned) continue;
    std::string key = detokenize(cleaned->tokens);
    if (!seen.insert(key).second) {
      ++fc.duplicate;
      --fc.kept;
      continue;
    }
    corpus.sentences.push_back(std::move(*cleaned));
  }
  if (corpus.empty()) {
    throw EmptyCorpusError("no sentences survived cleaning for corpus '" + style_id + "'");
  }
  return corpus;
}

StyleCorpus ingest_corpus(const std::string& path, const std::string& style_id,
                          FilterCounts* counts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return corpus_from_lines(lines, style_id, counts);
}

std::vector<ScoredBucket> bucket_by_score(const StyleCorpus& corpus, const StyleScorer& scorer,
                                          uint64_t seed) {
  std::vector<std::vector<ScoredSentence>> byBucket(10);
  for (const auto& s : corpus.sentences) {
    double score = scorer(s);
    if (!(score >= 0.0 && score <= 1.0)) {
      throw ContractViolation("style scorer returned " + std::to_string(score) +
                              " outside [0,1] for: " + detokenize(s));
    }
    int b = std::min(9, static_cast<int>(score * 10.0));
    byBucket[b].push_back({s, score});
  }

  Rng rng(seed);
  std::vector<ScoredBucket> out;
  for (int b = 0; b < 10; ++b) {
    auto& members = byBucket[b];
    if (members.empty()) continue;
    Rng bucketRng = rng.fork(static_cast<uint64_t>(b) + 1);
    bucketRng.shuffle(members);
    std::size_t n = members.size();
    std::size_t nTest = n / 10;
    std::size_t nDev = n / 10;
    std::size_t nTrain = n - nTest - nDev;
    auto take = [&](std::size_t from, std::size_t count, Split split) {
      if (count == 0) return;
      ScoredBucket sb;
      sb.bucket_index = b;
      sb.split = split;
      sb.sentences.assign(members.begin() + from, members.begin() + from + count);
      out.push_back(std::move(sb));
    };
    take(0, nTrain, Split::train);
    take(nTrain, nTest, Split::test);
    take(nTrain + nTest, nDev, Split::dev);
  }
  return out;
}

StyleCorpus target_style_train_set(const std::vector<ScoredBucket>& buckets) {
  StyleCorpus corpus;
  corpus.style_id = "target";
  for (const auto& b : buckets) {
    if (b.bucket_index == 9 && b.split == Split::train) {
      for (const auto& ss : b.sentences) corpus.sentences.push_back(ss.sentence);
    }
  }
  if (corpus.empty()) throw EmptyCorpusError("bucket 9 train split is empty");
  return corpus;
}

StyleCorpus split_corpus(const std::vector<ScoredBucket>& buckets, Split split,
                         const std::string& style_id) {
  StyleCorpus corpus;
  corpus.style_id = style_id;
  for (const auto& b : buckets) {
    if (b.split != split) continue;
    for (const auto& ss : b.sentences) corpus.sentences.push_back(ss.sentence);
  }
  return corpus;
}

}  // namespace styletag
