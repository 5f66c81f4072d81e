#include "styletag/decode.hpp"

#include <algorithm>
#include <cmath>

namespace styletag {

namespace {

double norm_score(const Hypothesis& h, double alpha) {
  if (alpha == 0.0 || h.ids.empty()) return h.logprob;
  return h.logprob / std::pow(double(h.ids.size()), alpha);
}

struct Candidate {
  double logprob;
  int parent;
  TokenId token;
};

}  // namespace

std::vector<Hypothesis> beam_search(const Model& model, const std::vector<TokenId>& input_ids,
                                    const BeamConfig& cfg) {
  if (cfg.beam < 1) throw ConfigError("beam size must be >= 1");
  int max_len = cfg.max_len > 0
                    ? cfg.max_len
                    : int(1.5 * double(input_ids.size())) + 5;
  max_len = std::min(max_len, model.config().max_len - 1);
  if (max_len < 1) max_len = 1;

  EncodedMemory<float> memory = model.encode_memory(input_ids);

  std::vector<Hypothesis> active{Hypothesis{}};
  std::vector<Hypothesis> done;  // finished or expired at max_len

  while (!active.empty()) {
    std::vector<std::vector<TokenId>> prefixes;
    prefixes.reserve(active.size());
    for (const auto& h : active) {
      std::vector<TokenId> p;
      p.reserve(h.ids.size() + 1);
      p.push_back(BpeVocab::kBos);
      p.insert(p.end(), h.ids.begin(), h.ids.end());
      prefixes.push_back(std::move(p));
    }
    auto logprobs = model.next_token_logprobs(memory, prefixes);

    std::vector<Candidate> cands;
    cands.reserve(active.size() * model.config().vocab_size);
    for (int i = 0; i < int(active.size()); ++i)
      for (TokenId v = 0; v < TokenId(model.config().vocab_size); ++v)
        cands.push_back({active[i].logprob + double(logprobs[i][v]), i, v});
    std::size_t keep = std::min<std::size_t>(cfg.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis h = active[cands[c].parent];
      h.ids.push_back(cands[c].token);
      h.logprob = cands[c].logprob;
      if (cands[c].token == BpeVocab::kEos) {
        h.finished = true;
        done.push_back(std::move(h));
      } else if (h.emitted() >= max_len) {
        done.push_back(std::move(h));  // expired, unfinished
      } else {
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);
  }

  std::stable_sort(done.begin(), done.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return norm_score(a, cfg.length_norm) > norm_score(b, cfg.length_norm);
  });
  // the n-best list: everything below the beam width never counts as a
  // final output
  if (done.size() > std::size_t(cfg.beam)) done.resize(cfg.beam);
  return done;
}

int count_tag_tokens(const std::vector<TokenId>& ids, const BpeVocab& vocab) {
  int n = 0;
  for (TokenId id : ids)
    if (vocab.is_tag(id)) ++n;
  return n;
}

Hypothesis rerank_tagged(const std::vector<Hypothesis>& hyps, const BpeVocab& vocab) {
  if (hyps.empty()) throw ContractViolation("rerank_tagged on empty hypothesis list");
  std::vector<Hypothesis> sorted = hyps;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    if (a.finished != b.finished) return a.finished;  // unfinished rank last
    int ta = count_tag_tokens(a.ids, vocab);
    int tb = count_tag_tokens(b.ids, vocab);
    if (ta != tb) return ta > tb;
    return a.logprob > b.logprob;
  });
  return sorted.front();
}

namespace {

std::vector<TokenId> content_ids(const std::vector<TokenId>& ids) {
  std::vector<TokenId> out;
  out.reserve(ids.size());
  for (TokenId id : ids)
    if (id != BpeVocab::kPad && id != BpeVocab::kBos && id != BpeVocab::kEos) out.push_back(id);
  return out;
}

}  // namespace

TransferResult transfer(const Model& tagger, const Model& generator, const BpeVocab& vocab,
                        const Sentence& s, const BeamConfig& cfg) {
  std::vector<TokenId> src = vocab.encode(s);

  auto tag_hyps = beam_search(tagger, src, cfg);
  Hypothesis z = rerank_tagged(tag_hyps, vocab);

  TransferResult result;
  result.tagger_truncated = !z.finished;
  std::vector<TokenId> z_ids = content_ids(z.ids);
  result.tagged = parse_tagged(vocab.decode_tokens(z_ids));

  auto gen_hyps = beam_search(generator, z_ids, cfg);
  if (gen_hyps.empty()) throw ContractViolation("generator produced no hypotheses");
  const Hypothesis& out = gen_hyps.front();
  result.generator_truncated = !out.finished;
  result.output.tokens = vocab.decode_tokens(content_ids(out.ids));
  result.output.raw = detokenize(result.output.tokens);
  return result;
}

}  // namespace styletag
