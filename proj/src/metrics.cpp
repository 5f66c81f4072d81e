#include "styletag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include <json.hpp>

#include "styletag/tagdata.hpp"

namespace styletag {

namespace {

std::map<std::string, std::size_t> ngram_counts(const TokenList& toks, int n) {
  std::map<std::string, std::size_t> counts;
  if (int(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int j = 1; j < n; ++j) {
      key += '\x01';
      key += toks[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<TokenList>& candidates,
            const std::vector<std::vector<TokenList>>& references_per_candidate, int max_n) {
  if (candidates.empty()) throw EmptyCorpusError("BLEU on empty candidate list");
  if (candidates.size() != references_per_candidate.size())
    throw ContractViolation("BLEU candidate/reference length mismatch");

  std::vector<std::size_t> matched(max_n + 1, 0), total(max_n + 1, 0);
  std::size_t cand_len = 0, ref_len = 0;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenList& cand = candidates[i];
    const auto& refs = references_per_candidate[i];
    if (refs.empty()) throw ContractViolation("candidate without references");
    cand_len += cand.size();
    // closest reference length; ties favor the shorter
    std::size_t best_ref = refs[0].size();
    for (const auto& r : refs) {
      auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(best_ref) || (diff(r.size()) == diff(best_ref) && r.size() < best_ref))
        best_ref = r.size();
    }
    ref_len += best_ref;

    for (int n = 1; n <= max_n; ++n) {
      auto cc = ngram_counts(cand, n);
      std::map<std::string, std::size_t> rmax;
      for (const auto& r : refs)
        for (const auto& [k, v] : ngram_counts(r, n)) rmax[k] = std::max(rmax[k], v);
      for (const auto& [k, v] : cc) {
        total[n] += v;
        auto it = rmax.find(k);
        if (it != rmax.end()) matched[n] += std::min(v, it->second);
      }
    }
  }

  double log_precision = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    std::size_t num = matched[n], den = total[n];
    if (n >= 2 && num == 0) {
      num += 1;
      den += 1;
    }
    if (num == 0 || den == 0) return 0.0;  // unsmoothed unigram miss
    log_precision += std::log(double(num) / double(den));
  }
  log_precision /= max_n;

  if (cand_len == 0) return 0.0;
  double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(cand_len));
  return 100.0 * bp * std::exp(log_precision);
}

double bleu_single_ref(const std::vector<TokenList>& candidates,
                       const std::vector<TokenList>& references, int max_n) {
  std::vector<std::vector<TokenList>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back({r});
  return bleu(candidates, refs, max_n);
}

namespace {

std::size_t lcs_length(const TokenList& a, const TokenList& b) {
  std::size_t rows = a.size(), cols = b.size();
  if (rows == 0 || cols == 0) return 0;
  std::vector<std::size_t> prev(cols + 1, 0), cur(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    for (std::size_t j = 1; j <= cols; ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[cols];
}

}  // namespace

double rouge_l(const std::vector<TokenList>& candidates,
               const std::vector<TokenList>& references) {
  if (candidates.empty()) throw EmptyCorpusError("ROUGE on empty candidate list");
  if (candidates.size() != references.size())
    throw ContractViolation("ROUGE candidate/reference length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& r = references[i];
    std::size_t lcs = lcs_length(c, r);
    if (lcs == 0 || c.empty() || r.empty()) continue;
    double p = double(lcs) / double(c.size());
    double rec = double(lcs) / double(r.size());
    sum += 2.0 * p * rec / (p + rec);
  }
  return 100.0 * sum / double(candidates.size());
}

std::string stem_lite(const std::string& word) {
  auto ends_with = [&](const char* suffix) {
    std::size_t n = std::strlen(suffix);
    return word.size() > n && word.compare(word.size() - n, n, suffix) == 0;
  };
  auto is_consonant = [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' ? false : true;
  };
  std::string stem = word;
  bool dedouble = false;
  if (ends_with("ing") && word.size() > 4) {
    stem = word.substr(0, word.size() - 3);
    dedouble = true;
  } else if (ends_with("ed") && word.size() > 3) {
    stem = word.substr(0, word.size() - 2);
    dedouble = true;
  } else if (ends_with("es") && word.size() > 3) {
    stem = word.substr(0, word.size() - 2);
  } else if (ends_with("ly") && word.size() > 3) {
    stem = word.substr(0, word.size() - 2);
  } else if (ends_with("s") && word.size() > 2) {
    stem = word.substr(0, word.size() - 1);
  }
  if (dedouble && stem.size() >= 3 && stem.back() == stem[stem.size() - 2] &&
      is_consonant(stem.back()))
    stem.pop_back();
  return stem;
}

namespace {

struct MeteorAlignment {
  // candidate position -> reference position, -1 when unmatched
  std::vector<int> match;
  std::size_t matches = 0;
};

// Stage 1: exact surface; stage 2: stemmed surface over the rest.
// Within a stage, candidate tokens match the leftmost free reference
// token, left to right.
MeteorAlignment align_meteor(const TokenList& cand, const TokenList& ref) {
  MeteorAlignment a;
  a.match.assign(cand.size(), -1);
  std::vector<bool> used(ref.size(), false);
  auto run_stage = [&](auto&& key) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (a.match[i] >= 0) continue;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (used[j]) continue;
        if (key(cand[i]) == key(ref[j])) {
          a.match[i] = int(j);
          used[j] = true;
          ++a.matches;
          break;
        }
      }
    }
  };
  run_stage([](const std::string& w) { return w; });
  run_stage([](const std::string& w) { return stem_lite(w); });
  return a;
}

std::size_t count_chunks(const MeteorAlignment& a) {
  std::size_t chunks = 0;
  int prev_ref = -2;
  bool in_chunk = false;
  for (std::size_t i = 0; i < a.match.size(); ++i) {
    if (a.match[i] < 0) {
      in_chunk = false;
      prev_ref = -2;
      continue;
    }
    if (!in_chunk || a.match[i] != prev_ref + 1) ++chunks;
    in_chunk = true;
    prev_ref = a.match[i];
  }
  return chunks;
}

double meteor_sentence(const TokenList& cand, const TokenList& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  MeteorAlignment a = align_meteor(cand, ref);
  if (a.matches == 0) return 0.0;
  double m = double(a.matches);
  double precision = m / double(cand.size());
  double recall = m / double(ref.size());
  double fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
  double chunks = double(count_chunks(a));
  double penalty = 0.5 * std::pow((chunks - 1.0) / m, 3.0);
  return fmean * (1.0 - penalty);
}

}  // namespace

double meteor_lite(const std::vector<TokenList>& candidates,
                   const std::vector<TokenList>& references) {
  if (candidates.empty()) throw EmptyCorpusError("METEOR on empty candidate list");
  if (candidates.size() != references.size())
    throw ContractViolation("METEOR candidate/reference length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    sum += meteor_sentence(candidates[i], references[i]);
  return 100.0 * sum / double(candidates.size());
}

Sentence naive_baseline(const Sentence& s, int target_label) {
  static const std::vector<std::string> neg = {"but", "overall", "it", "sucked"};
  static const std::vector<std::string> pos = {"but", "overall", "it", "was", "perfect"};
  if (target_label != 0 && target_label != 1)
    throw ContractViolation("naive_baseline target must be 0 or 1");
  Sentence out = s;
  const auto& suffix = target_label == 0 ? neg : pos;
  out.tokens.insert(out.tokens.end(), suffix.begin(), suffix.end());
  out.raw = detokenize(out.tokens);
  return out;
}

double nontag_change_audit(const std::vector<TokenList>& sources,
                           const std::vector<TokenList>& taggeds,
                           const std::vector<TokenList>& outputs) {
  if (sources.size() != taggeds.size() || sources.size() != outputs.size())
    throw ContractViolation("audit lists must be aligned");
  if (sources.empty()) throw EmptyCorpusError("audit on empty lists");
  std::size_t changed = 0;
  for (std::size_t i = 0; i < taggeds.size(); ++i) {
    std::map<std::string, std::size_t> need;
    for (const auto& t : taggeds[i])
      if (!is_tag_token(t)) ++need[t];
    std::map<std::string, std::size_t> have;
    for (const auto& t : outputs[i]) ++have[t];
    bool ok = true;
    for (const auto& [tok, cnt] : need) {
      auto it = have.find(tok);
      if (it == have.end() || it->second < cnt) {
        ok = false;
        break;
      }
    }
    if (!ok) ++changed;
  }
  return double(changed) / double(taggeds.size());
}

MetricReport evaluate(const EvalInputs& in) {
  if (in.sources.size() != in.outputs.size())
    throw ContractViolation("evaluate: sources/outputs length mismatch");
  if (in.sources.empty()) throw EmptyCorpusError("evaluate on empty lists");
  if (!in.references.empty() && in.references.size() != in.outputs.size())
    throw ContractViolation("evaluate: references length mismatch");
  if (!in.taggeds.empty() && in.taggeds.size() != in.outputs.size())
    throw ContractViolation("evaluate: taggeds length mismatch");

  MetricReport report;
  report.n = in.outputs.size();
  report.bleu_self = bleu_single_ref(in.outputs, in.sources);
  if (!in.references.empty()) report.bleu_ref = bleu_single_ref(in.outputs, in.references);
  const auto& refside = in.references.empty() ? in.sources : in.references;
  report.rouge_l = rouge_l(in.outputs, refside);
  report.meteor_lite = meteor_lite(in.outputs, refside);
  if (in.classifier) {
    std::vector<Sentence> outs;
    outs.reserve(in.outputs.size());
    for (const auto& toks : in.outputs) {
      Sentence s;
      s.tokens = toks;
      s.raw = detokenize(toks);
      outs.push_back(std::move(s));
    }
    report.acc = in.classifier->transfer_accuracy(outs, in.target_label);
  }
  if (!in.taggeds.empty())
    report.nontag_change_frac = nontag_change_audit(in.sources, in.taggeds, in.outputs);
  return report;
}

OpMix classify_operations(const std::vector<TokenList>& sources,
                          const std::vector<TokenList>& taggeds) {
  if (sources.size() != taggeds.size())
    throw ContractViolation("classify_operations lists must be aligned");
  OpMix mix;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::size_t tags = 0;
    std::map<std::string, std::size_t> kept;
    for (const auto& t : taggeds[i]) {
      if (is_tag_token(t))
        ++tags;
      else
        ++kept[t];
    }
    std::size_t removed = 0;
    std::map<std::string, std::size_t> src_counts;
    for (const auto& t : sources[i]) ++src_counts[t];
    for (const auto& [tok, cnt] : src_counts) {
      auto it = kept.find(tok);
      std::size_t have = it == kept.end() ? 0 : it->second;
      if (cnt > have) removed += cnt - have;
    }
    if (tags > removed)
      ++mix.add_ops;
    else
      ++mix.replace_ops;
  }
  return mix;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["acc"] = acc;
  j["bleu_self"] = bleu_self;
  if (bleu_ref)
    j["bleu_ref"] = *bleu_ref;
  else
    j["bleu_ref"] = nullptr;
  j["rouge_l"] = rouge_l;
  j["meteor_lite"] = meteor_lite;
  j["nontag_change_frac"] = nontag_change_frac;
  j["n"] = n;
  return j.dump(2) + "\n";
}

std::string MetricReport::to_table() const {
  char blr[32];
  if (bleu_ref)
    std::snprintf(blr, sizeof(blr), "%8.2f", *bleu_ref);
  else
    std::snprintf(blr, sizeof(blr), "%8s", "-");
  char hdr[256], row[256];
  std::snprintf(hdr, sizeof(hdr), "%-8s %8s %8s %8s %8s %8s\n", "", "Acc", "BL-s", "BL-r", "MET",
                "ROU");
  std::snprintf(row, sizeof(row), "%-8s %8.2f %8.2f %s %8.2f %8.2f\n", "run", acc * 100.0,
                bleu_self, blr, meteor_lite, rouge_l);
  return std::string(hdr) + row;
}

}  // namespace styletag
