#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "styletag/metrics.hpp"

using namespace styletag;

namespace {

TokenList toks(const std::string& text) {
  TokenList out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("BLEU is 100 on identical corpora and 0 on disjoint ones") {
  std::vector<TokenList> cands = {toks("the cat sat on the mat"), toks("a small dog barked")};
  CHECK(bleu_single_ref(cands, cands) == doctest::Approx(100.0).epsilon(1e-9));
  std::vector<TokenList> disjoint = {toks("x y z w q r"), toks("m n o p")};
  CHECK(bleu_single_ref(cands, disjoint) == doctest::Approx(0.0));
  CHECK_THROWS_AS(bleu_single_ref({}, {}), EmptyCorpusError);
}

TEST_CASE("BLEU clipped precision example") {
  // cand "the the the" vs ref "the cat": p1 clipped = 1/3,
  // p2 = (0+1)/(2+1), p3 = (0+1)/(1+1), p4 = (0+1)/(0+1),
  // BP = 1 (c=3 > r=2) so BLEU = 100 * (1/18)^(1/4)
  double expected = 100.0 * std::pow(1.0 / 18.0, 0.25);
  double got = bleu_single_ref({toks("the the the")}, {toks("the cat")});
  CHECK(got == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("BLEU brevity penalty fires for short candidates") {
  double full = bleu_single_ref({toks("a b c d e f")}, {toks("a b c d e f")});
  double cut = bleu_single_ref({toks("a b c d")}, {toks("a b c d e f")});
  CHECK(full == doctest::Approx(100.0));
  CHECK(cut < 100.0 * std::exp(1.0 - 6.0 / 4.0) + 1e-9);
}

namespace {

// independent BLEU oracle, recomputed from scratch with different
// bookkeeping (vector-of-tokens keys instead of joined strings)
double bleu_oracle(const std::vector<TokenList>& cands, const std::vector<TokenList>& refs) {
  int max_n = 4;
  std::vector<double> num(max_n + 1, 0.0), den(max_n + 1, 0.0);
  double clen = 0, rlen = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    clen += cands[i].size();
    rlen += refs[i].size();
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> cc, rc;
      for (int s = 0; s + n <= int(cands[i].size()); ++s)
        cc[std::vector<std::string>(cands[i].begin() + s, cands[i].begin() + s + n)]++;
      for (int s = 0; s + n <= int(refs[i].size()); ++s)
        rc[std::vector<std::string>(refs[i].begin() + s, refs[i].begin() + s + n)]++;
      for (const auto& [g, c] : cc) {
        den[n] += c;
        auto it = rc.find(g);
        if (it != rc.end()) num[n] += std::min(c, it->second);
      }
    }
  }
  double lp = 0;
  for (int n = 1; n <= max_n; ++n) {
    double nn = num[n], dd = den[n];
    if (n >= 2 && nn == 0) {
      nn += 1;
      dd += 1;
    }
    if (nn == 0 || dd == 0) return 0.0;
    lp += std::log(nn / dd);
  }
  if (clen == 0) return 0.0;
  double bp = clen >= rlen ? 1.0 : std::exp(1.0 - rlen / clen);
  return 100.0 * bp * std::exp(lp / max_n);
}

TokenList random_tokens(Rng& rng, const std::vector<std::string>& pool, int lo, int hi) {
  TokenList out;
  int len = lo + int(rng.uniform_int(hi - lo + 1));
  for (int i = 0; i < len; ++i) out.push_back(pool[rng.uniform_int(pool.size())]);
  return out;
}

}  // namespace

TEST_CASE("BLEU matches the independent oracle on random pairs") {
  std::vector<std::string> pool = {"a", "b", "c", "d", "e", "the", "cat", "dog"};
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenList> cands, refs;
    int n = 1 + int(rng.uniform_int(5));
    for (int i = 0; i < n; ++i) {
      cands.push_back(random_tokens(rng, pool, 1, 10));
      refs.push_back(random_tokens(rng, pool, 1, 10));
    }
    CHECK(bleu_single_ref(cands, refs) ==
          doctest::Approx(bleu_oracle(cands, refs)).epsilon(1e-6));
  }
}

TEST_CASE("BLEU is invariant under corpus permutation") {
  std::vector<TokenList> cands = {toks("a b c"), toks("d e f g"), toks("a a b")};
  std::vector<TokenList> refs = {toks("a b d"), toks("d f g"), toks("a b b")};
  double fwd = bleu_single_ref(cands, refs);
  std::vector<TokenList> cands_r(cands.rbegin(), cands.rend());
  std::vector<TokenList> refs_r(refs.rbegin(), refs.rend());
  CHECK(fwd == doctest::Approx(bleu_single_ref(cands_r, refs_r)).epsilon(1e-12));
}

TEST_CASE("ROUGE-L hand example and bounds") {
  // cand "a b c d" vs ref "a c d": LCS 3, P=3/4, R=1, F1=6/7
  double got = rouge_l({toks("a b c d")}, {toks("a c d")});
  CHECK(got == doctest::Approx(100.0 * 6.0 / 7.0).epsilon(1e-9));
  CHECK(rouge_l({toks("same text here")}, {toks("same text here")}) ==
        doctest::Approx(100.0));
  CHECK(rouge_l({toks("x y z")}, {toks("p q r")}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(rouge_l({}, {}), EmptyCorpusError);
}

namespace {

// LCS recomputed recursively with memoization, as an independent check
int lcs_rec(const TokenList& a, const TokenList& b, int i, int j,
            std::map<std::pair<int, int>, int>& memo) {
  if (i == int(a.size()) || j == int(b.size())) return 0;
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int best;
  if (a[i] == b[j])
    best = 1 + lcs_rec(a, b, i + 1, j + 1, memo);
  else
    best = std::max(lcs_rec(a, b, i + 1, j, memo), lcs_rec(a, b, i, j + 1, memo));
  memo[key] = best;
  return best;
}

double rouge_oracle(const std::vector<TokenList>& cands, const std::vector<TokenList>& refs) {
  double sum = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    std::map<std::pair<int, int>, int> memo;
    int lcs = lcs_rec(cands[i], refs[i], 0, 0, memo);
    if (lcs == 0) continue;
    double p = double(lcs) / cands[i].size();
    double r = double(lcs) / refs[i].size();
    sum += 2 * p * r / (p + r);
  }
  return 100.0 * sum / cands.size();
}

}  // namespace

TEST_CASE("ROUGE-L matches the recursive oracle on random pairs") {
  std::vector<std::string> pool = {"a", "b", "c", "d", "e"};
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenList> cands = {random_tokens(rng, pool, 1, 9)};
    std::vector<TokenList> refs = {random_tokens(rng, pool, 1, 9)};
    CHECK(rouge_l(cands, refs) == doctest::Approx(rouge_oracle(cands, refs)).epsilon(1e-6));
  }
}

TEST_CASE("meteor_lite endpoints") {
  CHECK(meteor_lite({toks("the cat sat down")}, {toks("the cat sat down")}) ==
        doctest::Approx(100.0).epsilon(1e-9));
  CHECK(meteor_lite({toks("x y z")}, {toks("p q r")}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(meteor_lite({}, {}), EmptyCorpusError);
}

TEST_CASE("stemmer maps inflected forms together") {
  CHECK(stem_lite("running") == stem_lite("run"));
  CHECK(stem_lite("walked") == stem_lite("walk"));
  CHECK(stem_lite("boxes") == stem_lite("box"));
  CHECK(stem_lite("quickly") == stem_lite("quick"));
  CHECK(stem_lite("cats") == stem_lite("cat"));
  CHECK(stem_lite("the") == "the");
}

TEST_CASE("meteor_lite stem stage matches inflections") {
  double exact_miss = meteor_lite({toks("he was running home")}, {toks("he was run home")});
  CHECK(exact_miss > 90.0);  // "running" aligns with "run" via stems
  double unrelated = meteor_lite({toks("he was jumping home")}, {toks("she is sleeping there")});
  CHECK(unrelated < exact_miss);
}

namespace {

// formula oracle: independent recomputation of the declared meteor_lite
// definition (two greedy stages, 9:1 F-mean, (chunks-1) penalty)
double meteor_oracle_sentence(const TokenList& cand, const TokenList& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<int> match(cand.size(), -1);
  std::vector<bool> used(ref.size(), false);
  for (int stage = 0; stage < 2; ++stage) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (match[i] >= 0) continue;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (used[j]) continue;
        bool hit = stage == 0 ? cand[i] == ref[j] : stem_lite(cand[i]) == stem_lite(ref[j]);
        if (hit) {
          match[i] = int(j);
          used[j] = true;
          break;
        }
      }
    }
  }
  int m = 0;
  for (int v : match)
    if (v >= 0) ++m;
  if (m == 0) return 0.0;
  int chunks = 0;
  int prev = -5;
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] < 0) {
      prev = -5;
      continue;
    }
    if (match[i] != prev + 1) ++chunks;
    prev = match[i];
  }
  double p = double(m) / cand.size(), r = double(m) / ref.size();
  double f = 10.0 * p * r / (r + 9.0 * p);
  double pen = 0.5 * std::pow((double(chunks) - 1.0) / m, 3.0);
  return f * (1.0 - pen);
}

}  // namespace

TEST_CASE("meteor_lite matches its formula oracle on random pairs") {
  std::vector<std::string> pool = {"run", "running", "walk", "walked", "cat", "cats",
                                   "the", "a",       "dog",  "house"};
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    TokenList cand = random_tokens(rng, pool, 1, 8);
    TokenList ref = random_tokens(rng, pool, 1, 8);
    double expected = 100.0 * meteor_oracle_sentence(cand, ref);
    CHECK(meteor_lite({cand}, {ref}) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("naive baseline appends the declared suffixes") {
  Sentence s;
  s.tokens = toks("great tacos");
  s.raw = "great tacos";
  CHECK(detokenize(naive_baseline(s, 0)) == "great tacos but overall it sucked");
  CHECK(detokenize(naive_baseline(s, 1)) == "great tacos but overall it was perfect");
  // double application appends twice; idempotence is not promised
  Sentence twice = naive_baseline(naive_baseline(s, 0), 0);
  CHECK(twice.tokens.size() == s.tokens.size() + 8);
  CHECK_THROWS_AS(naive_baseline(s, 2), ContractViolation);
}

TEST_CASE("nontag audit counts sub-multiset violations") {
  std::vector<TokenList> sources = {toks("send the data"), toks("call me now"),
                                    toks("check the file")};
  std::vector<TokenList> taggeds = {toks("[TAG]_0 send the data"), toks("call me [TAG]_0 now"),
                                    toks("check the [TAG]_0 file")};
  std::vector<TokenList> outputs = {toks("please send the data"),  // preserved
                                    toks("call me right now"),     // preserved
                                    toks("check a file")};         // dropped "the"
  CHECK(nontag_change_audit(sources, taggeds, outputs) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(nontag_change_audit(sources, taggeds, {toks("x")}), ContractViolation);
}

TEST_CASE("evaluate populates every field") {
  StyleCorpus neg, pos;
  for (int i = 0; i < 20; ++i) {
    Sentence a;
    a.tokens = toks("plain item " + std::to_string(i));
    a.raw = detokenize(a.tokens);
    neg.sentences.push_back(a);
    Sentence b;
    b.tokens = toks("lovely item " + std::to_string(i));
    b.raw = detokenize(b.tokens);
    pos.sentences.push_back(b);
  }
  NgramClassifier clf = NgramClassifier::train(neg, pos);

  EvalInputs in;
  in.sources = {toks("plain item 1"), toks("plain item 2")};
  in.taggeds = {toks("[TAG]_0 item 1"), toks("plain item [TAG]_0 2")};
  in.outputs = {toks("lovely item 1"), toks("lovely item 2")};
  in.classifier = &clf;
  in.target_label = 1;
  MetricReport r = evaluate(in);
  CHECK(r.n == 2);
  CHECK(r.acc > 0.9);
  CHECK(r.bleu_self > 0.0);
  CHECK(r.bleu_self < 100.0);
  CHECK_FALSE(r.bleu_ref.has_value());
  CHECK(r.rouge_l > 0.0);
  CHECK(r.meteor_lite > 0.0);
  CHECK(r.nontag_change_frac == doctest::Approx(0.5));  // "plain" dropped in output 1

  in.references = {toks("lovely item 1"), toks("lovely item 2")};
  MetricReport r2 = evaluate(in);
  REQUIRE(r2.bleu_ref.has_value());
  CHECK(*r2.bleu_ref == doctest::Approx(100.0));

  // outputs == sources with self references
  EvalInputs self;
  self.sources = in.sources;
  self.outputs = in.sources;
  MetricReport rs = evaluate(self);
  CHECK(rs.bleu_self == doctest::Approx(100.0));

  std::string json = r.to_json();
  CHECK(json.find("bleu_self") != std::string::npos);
  std::string table = r.to_table();
  CHECK(table.find("BL-s") != std::string::npos);
  CHECK(table.find("ROU") != std::string::npos);
}

TEST_CASE("suffix with net-positive target weight strictly raises the score") {
  StyleCorpus neg, pos;
  for (int i = 0; i < 30; ++i) {
    Sentence a;
    a.tokens = toks("service was slow today item " + std::to_string(i));
    a.raw = detokenize(a.tokens);
    neg.sentences.push_back(a);
    Sentence b;
    b.tokens = toks("service was perfect today item " + std::to_string(i));
    b.raw = detokenize(b.tokens);
    pos.sentences.push_back(b);
  }
  NgramClassifier clf = NgramClassifier::train(neg, pos);

  Sentence s;
  s.tokens = toks("service was slow today");
  s.raw = detokenize(s.tokens);
  Sentence appended = naive_baseline(s, 1);

  // net weight of the features the suffix adds
  auto before = clf.features(s);
  auto after = clf.features(appended);
  double delta = 0.0;
  for (const auto& [k, v] : after) delta += clf.weight(k) * v;
  for (const auto& [k, v] : before) delta -= clf.weight(k) * v;
  REQUIRE(delta > 0.0);  // "perfect" carries positive weight
  CHECK(clf.score(appended) > clf.score(s));
}

TEST_CASE("operation classification separates add from replace") {
  std::vector<TokenList> sources = {toks("send the data"), toks("the food was bad")};
  std::vector<TokenList> taggeds = {
      toks("[TAG]_0 send the data"),      // pure insertion: add
      toks("the food was [TAG]_0")};      // "bad" removed: replace
  OpMix mix = classify_operations(sources, taggeds);
  CHECK(mix.add_ops == 1);
  CHECK(mix.replace_ops == 1);
  CHECK(mix.add_fraction() == doctest::Approx(0.5));
}
