#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "styletag/common.hpp"

namespace styletag {

using TokenId = int32_t;

// Byte-pair-encoding vocabulary shared by tagger and generator.
// Reserved ids: PAD, BOS, EOS, UNK, then the positional tag specials
// [TAG]_0..[TAG]_{tag_budget-1}, then alphabet symbols, then merge outputs.
class BpeVocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr const char* kEndOfWord = "</w>";

  BpeVocab() = default;

  // Sennrich-style greedy merges over the corpus word frequencies. Stops
  // at vocab_size total symbols or when no pair occurs at least twice.
  // Ties between equally frequent pairs break lexicographically.
  static BpeVocab train(const StyleCorpus& corpus, std::size_t vocab_size,
                        int tag_budget = kDefaultTagBudget);
  static BpeVocab train(const std::vector<const StyleCorpus*>& corpora, std::size_t vocab_size,
                        int tag_budget = kDefaultTagBudget);

  static constexpr int kDefaultTagBudget = 20;

  std::size_t size() const { return id_to_token_.size(); }
  int tag_budget() const { return tag_budget_; }
  std::size_t num_specials() const { return 4 + static_cast<std::size_t>(tag_budget_); }

  TokenId tag_id(int t) const;  // clamps t to tag_budget-1
  bool is_tag(TokenId id) const { return id >= 4 && id < 4 + tag_budget_; }
  bool is_special(TokenId id) const { return id >= 0 && id < static_cast<TokenId>(num_specials()); }
  int tag_position(TokenId id) const { return is_tag(id) ? id - 4 : -1; }

  static std::string tag_surface(int t);
  // parses "[TAG]_t"; nullopt if not a tag surface form
  static std::optional<int> parse_tag_surface(const std::string& token);

  const std::string& token_text(TokenId id) const;
  std::optional<TokenId> lookup(const std::string& token) const;

  // Segments each word by applying merges in training order. Whole-word
  // special surfaces ([TAG]_t and the four reserved forms) map to their
  // ids atomically; characters never seen in training map to UNK.
  std::vector<TokenId> encode(const Sentence& s) const;
  std::vector<TokenId> encode_tokens(const std::vector<std::string>& tokens) const;

  // Inverse of encode up to UNK; strips PAD/BOS/EOS, keeps tag surfaces.
  std::string decode(const std::vector<TokenId>& ids) const;
  std::vector<std::string> decode_tokens(const std::vector<TokenId>& ids) const;

  std::string to_json() const;
  static BpeVocab from_json(const std::string& json_text);
  void save(const std::string& path) const;
  static BpeVocab load(const std::string& path);

  uint64_t fingerprint() const;

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }

 private:
  void build_tables();
  std::vector<std::string> segment_word(const std::string& word) const;

  int tag_budget_ = kDefaultTagBudget;
  std::vector<std::string> alphabet_;                          // single symbols seen in training
  std::vector<std::pair<std::string, std::string>> merges_;    // in training order
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::unordered_map<std::string, int> merge_rank_;            // "a\x01b" -> rank
  mutable std::unordered_map<std::string, std::vector<TokenId>> word_cache_;
};

}  // namespace styletag
