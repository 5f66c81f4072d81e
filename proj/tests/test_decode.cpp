#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "styletag/decode.hpp"
#include "styletag/train.hpp"

using namespace styletag;

namespace {

ModelConfig micro_config(int vocab, uint64_t seed) {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.dim = 8;
  cfg.ff_dim = 16;
  cfg.dropout = 0.0;
  cfg.max_len = 12;
  cfg.vocab_size = vocab;
  cfg.seed = seed;
  cfg.role = "tagger";
  return cfg;
}

// exhaustive search over every sequence whose EOS, if any, is final;
// finished sequences may stop early, unfinished ones run to max_len
struct Enumerated {
  std::vector<TokenId> ids;
  double logprob;
  bool finished;
};

void enumerate_all(const Model& model, const EncodedMemory<float>& mem, int max_len,
                   std::vector<TokenId>& prefix, double logprob, std::vector<Enumerated>& out) {
  std::vector<std::vector<TokenId>> q{std::vector<TokenId>{BpeVocab::kBos}};
  q[0].insert(q[0].end(), prefix.begin(), prefix.end());
  auto lp = model.next_token_logprobs(mem, q);
  for (TokenId v = 0; v < TokenId(model.config().vocab_size); ++v) {
    double next_lp = logprob + double(lp[0][v]);
    prefix.push_back(v);
    if (v == BpeVocab::kEos) {
      out.push_back({prefix, next_lp, true});
    } else if (int(prefix.size()) >= max_len) {
      out.push_back({prefix, next_lp, false});
    } else {
      enumerate_all(model, mem, max_len, prefix, next_lp, out);
    }
    prefix.pop_back();
  }
}

}  // namespace

TEST_CASE("beam equals exhaustive search at full width") {
  int vocab = 4, max_len = 3;
  for (uint64_t seed = 0; seed < 25; ++seed) {
    Model model(micro_config(vocab, seed + 1));
    std::vector<TokenId> input = {TokenId(1 + seed % 3), TokenId(2)};
    BeamConfig bc;
    bc.beam = 64;  // 4^3
    bc.max_len = max_len;
    auto hyps = beam_search(model, input, bc);
    REQUIRE(!hyps.empty());

    EncodedMemory<float> mem = model.encode_memory(input);
    std::vector<Enumerated> all;
    std::vector<TokenId> prefix;
    enumerate_all(model, mem, max_len, prefix, 0.0, all);
    auto best = std::max_element(all.begin(), all.end(),
                                 [](const Enumerated& a, const Enumerated& b) {
                                   return a.logprob < b.logprob;
                                 });
    CHECK(hyps[0].ids == best->ids);
    CHECK(hyps[0].logprob == doctest::Approx(best->logprob).epsilon(1e-9));
    CHECK(hyps[0].finished == best->finished);
  }
}

TEST_CASE("beam one equals greedy decoding") {
  Model model(micro_config(16, 3));
  std::vector<TokenId> input = {5, 6, 7};
  BeamConfig bc;
  bc.beam = 1;
  bc.max_len = 6;
  auto hyps = beam_search(model, input, bc);
  REQUIRE(hyps.size() == 1);

  // manual greedy
  EncodedMemory<float> mem = model.encode_memory(input);
  std::vector<TokenId> prefix = {BpeVocab::kBos};
  std::vector<TokenId> greedy;
  for (int step = 0; step < 6; ++step) {
    auto lp = model.next_token_logprobs(mem, {prefix});
    TokenId best = 0;
    for (TokenId v = 1; v < 16; ++v)
      if (lp[0][v] > lp[0][best]) best = v;
    greedy.push_back(best);
    if (best == BpeVocab::kEos) break;
    prefix.push_back(best);
  }
  CHECK(hyps[0].ids == greedy);
}

TEST_CASE("beam search is deterministic") {
  Model model(micro_config(12, 9));
  BeamConfig bc;
  bc.beam = 5;
  bc.max_len = 5;
  auto a = beam_search(model, {4, 5}, bc);
  auto b = beam_search(model, {4, 5}, bc);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].ids == b[i].ids);
    CHECK(a[i].logprob == b[i].logprob);
  }
}

TEST_CASE("wider beams never lower the top score") {
  for (uint64_t seed = 1; seed < 6; ++seed) {
    Model model(micro_config(6, seed));
    std::vector<TokenId> input = {4, 5};
    double prev = -1e18;
    for (int beam : {1, 2, 4, 8, 16}) {
      BeamConfig bc;
      bc.beam = beam;
      bc.max_len = 3;
      auto hyps = beam_search(model, input, bc);
      REQUIRE(!hyps.empty());
      CHECK(hyps[0].logprob >= prev - 1e-9);
      prev = std::max(prev, hyps[0].logprob);
    }
  }
}

TEST_CASE("rerank_tagged prefers more tags then logprob") {
  StyleCorpus c;
  Sentence s;
  s.tokens = {"alpha", "alpha", "beta", "beta", "gamma", "gamma"};
  s.raw = detokenize(s.tokens);
  c.sentences = {s};
  BpeVocab vocab = BpeVocab::train(c, 60, 20);

  auto hyp = [&](std::vector<TokenId> ids, double lp, bool fin) {
    Hypothesis h;
    h.ids = std::move(ids);
    h.logprob = lp;
    h.finished = fin;
    return h;
  };
  TokenId t0 = vocab.tag_id(0), t1 = vocab.tag_id(1);
  TokenId w = TokenId(vocab.num_specials());  // some regular symbol

  // tag counts 0, 2, 1; the two-tag one wins despite the worst logprob
  std::vector<Hypothesis> hyps = {hyp({w, w}, -0.1, true), hyp({t0, t1}, -9.0, true),
                                  hyp({t0, w}, -0.5, true)};
  CHECK(rerank_tagged(hyps, vocab).ids == std::vector<TokenId>{t0, t1});

  // equal counts: higher logprob wins
  std::vector<Hypothesis> tie = {hyp({t0, w}, -2.0, true), hyp({w, t0}, -1.0, true)};
  CHECK(rerank_tagged(tie, vocab).ids == std::vector<TokenId>{w, t0});

  // single hypothesis returns itself
  std::vector<Hypothesis> one = {hyp({w}, -3.0, false)};
  CHECK(rerank_tagged(one, vocab).ids == std::vector<TokenId>{w});

  // unfinished hypotheses rank last regardless of tags
  std::vector<Hypothesis> mixed = {hyp({t0, t1}, -1.0, false), hyp({w, w}, -5.0, true)};
  CHECK(rerank_tagged(mixed, vocab).ids == std::vector<TokenId>{w, w});

  CHECK_THROWS_AS(rerank_tagged({}, vocab), ContractViolation);
}

TEST_CASE("transfer composes tagger and generator deterministically") {
  // overfit two micro models on a one-sentence task, then check the
  // composed pipeline reproduces the memorized transfer
  StyleCorpus c;
  for (const char* line : {"send me the data", "please send me the data",
                           "send me the data please now", "please call me today"}) {
    Sentence s;
    std::string cur;
    for (const char* p = line;; ++p) {
      if (*p == ' ' || *p == '\0') {
        if (!cur.empty()) s.tokens.push_back(cur);
        cur.clear();
        if (*p == '\0') break;
      } else {
        cur += *p;
      }
    }
    s.raw = line;
    c.sentences.push_back(s);
  }
  BpeVocab vocab = BpeVocab::train(c, 160, 20);

  std::vector<ParallelPair> tag_pairs;
  ParallelPair tp;
  tp.input = {"send", "me", "the", "data"};
  tp.output = {"[TAG]_0", "send", "me", "the", "data"};
  tp.mode = PairMode::add;
  tag_pairs.push_back(tp);

  std::vector<ParallelPair> gen_pairs;
  ParallelPair gp;
  gp.input = {"[TAG]_0", "send", "me", "the", "data"};
  gp.output = {"please", "send", "me", "the", "data"};
  gp.mode = PairMode::generator;
  gen_pairs.push_back(gp);

  ModelConfig mc;
  mc.layers = 1;
  mc.heads = 2;
  mc.dim = 32;
  mc.ff_dim = 64;
  mc.dropout = 0.0;
  mc.max_len = 16;
  mc.vocab_size = int(vocab.size());
  mc.seed = 2;
  mc.role = "tagger";
  Model tagger(mc);
  mc.role = "generator";
  mc.seed = 3;
  Model generator(mc);

  TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 1;
  tc.lr = 3e-3;
  tc.warmup_steps = 20;
  train_model(tagger, vocab, tag_pairs, tc);
  train_model(generator, vocab, gen_pairs, tc);

  Sentence input;
  input.tokens = {"send", "me", "the", "data"};
  input.raw = detokenize(input.tokens);
  BeamConfig bc;
  bc.beam = 5;
  TransferResult r1 = transfer(tagger, generator, vocab, input, bc);
  TransferResult r2 = transfer(tagger, generator, vocab, input, bc);
  CHECK(detokenize(r1.tagged.tokens) == "[TAG]_0 send me the data");
  CHECK(detokenize(r1.output.tokens) == "please send me the data");
  CHECK(r1.tagged.tokens == r2.tagged.tokens);
  CHECK(r1.output.tokens == r2.output.tokens);
  CHECK(r1.tagged.tags.size() == 1);
}
