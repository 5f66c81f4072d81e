#include "styletag/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

namespace styletag {

namespace {

const char* kReservedSurfaces[4] = {"<pad>", "<s>", "</s>", "<unk>"};

// UTF-8 aware split of a word into single-codepoint symbols
std::vector<std::string> to_symbols(const std::string& word) {
  std::vector<std::string> syms;
  std::size_t i = 0;
  while (i < word.size()) {
    unsigned char c = word[i];
    std::size_t len = 1;
    if ((c & 0x80u) == 0)
      len = 1;
    else if ((c & 0xE0u) == 0xC0u)
      len = 2;
    else if ((c & 0xF0u) == 0xE0u)
      len = 3;
    else if ((c & 0xF8u) == 0xF0u)
      len = 4;
    len = std::min(len, word.size() - i);
    syms.push_back(word.substr(i, len));
    i += len;
  }
  if (!syms.empty()) syms.back() += BpeVocab::kEndOfWord;
  return syms;
}

std::string pair_key(const std::string& a, const std::string& b) { return a + '\x01' + b; }

}  // namespace

std::string BpeVocab::tag_surface(int t) { return "[TAG]_" + std::to_string(t); }

std::optional<int> BpeVocab::parse_tag_surface(const std::string& token) {
  static const std::string prefix = "[TAG]_";
  if (token.size() <= prefix.size() || token.compare(0, prefix.size(), prefix) != 0)
    return std::nullopt;
  int value = 0;
  for (std::size_t i = prefix.size(); i < token.size(); ++i) {
    char c = token[i];
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
    if (value > 1000000) return std::nullopt;
  }
  return value;
}

TokenId BpeVocab::tag_id(int t) const {
  if (t < 0) t = 0;
  if (t >= tag_budget_) t = tag_budget_ - 1;
  return 4 + t;
}

BpeVocab BpeVocab::train(const StyleCorpus& corpus, std::size_t vocab_size, int tag_budget) {
  return train(std::vector<const StyleCorpus*>{&corpus}, vocab_size, tag_budget);
}

BpeVocab BpeVocab::train(const std::vector<const StyleCorpus*>& corpora, std::size_t vocab_size,
                         int tag_budget) {
  if (tag_budget < 1) throw ConfigError("tag_budget must be >= 1");
  bool any = false;
  for (const auto* c : corpora)
    if (c && !c->empty()) any = true;
  if (!any) throw EmptyCorpusError("BPE training corpus is empty");

  BpeVocab vocab;
  vocab.tag_budget_ = tag_budget;

  // word frequency table; special surfaces are never segmented
  std::map<std::string, long long> word_freq;
  for (const auto* c : corpora) {
    if (!c) continue;
    for (const auto& s : c->sentences)
      for (const auto& tok : s.tokens)
        if (!parse_tag_surface(tok)) ++word_freq[tok];
  }

  struct Word {
    std::vector<std::string> syms;
    long long freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  std::map<std::string, bool> alpha_set;
  for (const auto& [w, f] : word_freq) {
    Word word{to_symbols(w), f};
    for (const auto& s : word.syms) alpha_set[s] = true;
    words.push_back(std::move(word));
  }

  for (const auto& [sym, _] : alpha_set) vocab.alphabet_.push_back(sym);

  std::size_t base = vocab.num_specials() + vocab.alphabet_.size();
  if (vocab_size <= vocab.num_specials())
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " does not cover the " + std::to_string(vocab.num_specials()) +
                      " reserved special tokens");
  if (vocab_size < base)
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                      std::to_string(base) + " symbols needed for specials plus base characters");

  // surfaces a merge output must never collide with
  auto collides_with_special = [&](const std::string& merged) {
    for (const char* r : kReservedSurfaces)
      if (merged == r) return true;
    std::string stripped = merged;
    auto pos = stripped.rfind(kEndOfWord);
    if (pos != std::string::npos && pos + 4 == stripped.size()) stripped.resize(pos);
    if (parse_tag_surface(stripped)) return true;
    for (const char* r : kReservedSurfaces)
      if (stripped == r) return true;
    return false;
  };

  std::size_t target_merges = vocab_size - base;
  for (std::size_t m = 0; m < target_merges; ++m) {
    // count symbol pairs, weighted by word frequency
    std::map<std::pair<std::string, std::string>, long long> pair_freq;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i)
        pair_freq[{w.syms[i], w.syms[i + 1]}] += w.freq;
    }
    std::pair<std::string, std::string> best;
    long long best_freq = 0;
    for (const auto& [pr, f] : pair_freq) {
      if (collides_with_special(pr.first + pr.second)) continue;
      if (f > best_freq) {  // map iteration is lexicographic, first max wins ties
        best_freq = f;
        best = pr;
      }
    }
    if (best_freq < 2) break;

    std::string merged = best.first + best.second;
    for (auto& w : words) {
      std::vector<std::string> out;
      out.reserve(w.syms.size());
      std::size_t i = 0;
      while (i < w.syms.size()) {
        if (i + 1 < w.syms.size() && w.syms[i] == best.first && w.syms[i + 1] == best.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(w.syms[i]);
          ++i;
        }
      }
      w.syms = std::move(out);
    }
    vocab.merges_.push_back(best);
  }

  vocab.build_tables();
  return vocab;
}

void BpeVocab::build_tables() {
  id_to_token_.clear();
  token_to_id_.clear();
  merge_rank_.clear();
  word_cache_.clear();

  for (const char* r : kReservedSurfaces) id_to_token_.push_back(r);
  for (int t = 0; t < tag_budget_; ++t) id_to_token_.push_back(tag_surface(t));
  for (const auto& a : alphabet_) id_to_token_.push_back(a);
  for (const auto& [a, b] : merges_) id_to_token_.push_back(a + b);

  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i)).second)
      throw LoadError("duplicate symbol in vocab: " + id_to_token_[i]);
  }
  for (std::size_t i = 0; i < merges_.size(); ++i)
    merge_rank_[pair_key(merges_[i].first, merges_[i].second)] = static_cast<int>(i);
}

std::vector<std::string> BpeVocab::segment_word(const std::string& word) const {
  std::vector<std::string> syms = to_symbols(word);
  // apply merges in training order
  for (const auto& [a, b] : merges_) {
    if (syms.size() < 2) break;
    std::vector<std::string> out;
    out.reserve(syms.size());
    std::size_t i = 0;
    bool changed = false;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        out.push_back(a + b);
        i += 2;
        changed = true;
      } else {
        out.push_back(syms[i]);
        ++i;
      }
    }
    if (changed) syms = std::move(out);
  }
  return syms;
}

std::vector<TokenId> BpeVocab::encode_tokens(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  for (const auto& tok : tokens) {
    if (auto t = parse_tag_surface(tok)) {
      ids.push_back(tag_id(*t));
      continue;
    }
    auto direct = token_to_id_.find(tok);
    if (direct != token_to_id_.end() && is_special(direct->second)) {
      ids.push_back(direct->second);
      continue;
    }
    auto cached = word_cache_.find(tok);
    if (cached != word_cache_.end()) {
      ids.insert(ids.end(), cached->second.begin(), cached->second.end());
      continue;
    }
    std::vector<TokenId> word_ids;
    for (const auto& sym : segment_word(tok)) {
      auto it = token_to_id_.find(sym);
      word_ids.push_back(it == token_to_id_.end() ? kUnk : it->second);
    }
    ids.insert(ids.end(), word_ids.begin(), word_ids.end());
    word_cache_.emplace(tok, std::move(word_ids));
  }
  return ids;
}

std::vector<TokenId> BpeVocab::encode(const Sentence& s) const { return encode_tokens(s.tokens); }

const std::string& BpeVocab::token_text(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw ContractViolation("token id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

std::optional<TokenId> BpeVocab::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> BpeVocab::decode_tokens(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (TokenId id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    const std::string& text = token_text(id);
    if (is_tag(id) || id == kUnk) {
      flush();
      words.push_back(text);
      continue;
    }
    std::string piece = text;
    bool ends_word = false;
    auto pos = piece.rfind(kEndOfWord);
    if (pos != std::string::npos && pos + 4 == piece.size()) {
      piece.resize(pos);
      ends_word = true;
    }
    cur += piece;
    if (ends_word) flush();
  }
  flush();
  return words;
}

std::string BpeVocab::decode(const std::vector<TokenId>& ids) const {
  return detokenize(decode_tokens(ids));
}

std::string BpeVocab::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["tag_budget"] = tag_budget_;
  j["alphabet"] = alphabet_;
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  j["merges"] = merges;
  nlohmann::json specials;
  specials["pad"] = kReservedSurfaces[0];
  specials["bos"] = kReservedSurfaces[1];
  specials["eos"] = kReservedSurfaces[2];
  specials["unk"] = kReservedSurfaces[3];
  specials["tags"] = tag_budget_;
  j["specials"] = specials;
  return j.dump(2) + "\n";
}

BpeVocab BpeVocab::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    throw LoadError(std::string("vocab JSON parse error: ") + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw LoadError("unsupported vocab version");
  BpeVocab v;
  v.tag_budget_ = j.at("specials").at("tags").get<int>();
  v.alphabet_ = j.at("alphabet").get<std::vector<std::string>>();
  for (const auto& m : j.at("merges")) {
    if (!m.is_array() || m.size() != 2) throw LoadError("malformed merge entry");
    v.merges_.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
  }
  v.build_tables();
  return v;
}

void BpeVocab::save(const std::string& path) const { write_text_file(path, to_json()); }

BpeVocab BpeVocab::load(const std::string& path) { return from_json(read_text_file(path)); }

uint64_t BpeVocab::fingerprint() const {
  std::string j = to_json();
  return fnv1a(j.data(), j.size());
}

}  // namespace styletag
