#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styletag/bpe.hpp"
#include "styletag/common.hpp"

namespace styletag {

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int dim = 512;
  int ff_dim = 2048;
  double dropout = 0.3;
  int max_len = 64;
  int vocab_size = 0;
  uint64_t seed = 1;
  std::string role;  // "tagger" or "generator"

  int head_dim() const { return dim / heads; }
  void validate() const;
};

ModelConfig paper_preset();
ModelConfig desk_preset();

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Token batch for teacher-forced training. PAD fills the tail of every
// row; dec_in rows start with BOS and dec_tgt rows end with EOS.
struct EncodedBatch {
  int batch = 0;
  int src_len = 0;
  int tgt_len = 0;
  std::vector<TokenId> src;        // batch * src_len
  std::vector<TokenId> dec_in;     // batch * tgt_len
  std::vector<TokenId> dec_tgt;    // batch * tgt_len
  std::vector<int> src_valid;      // per item, count of non-PAD src tokens
  std::vector<int> tgt_valid;      // per item, count of loss-counted positions
};

EncodedBatch make_batch(const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>>&
                            encoded_pairs,
                        int max_len);

// Encoder output kept around for incremental decoding.
template <typename T>
struct EncodedMemory {
  int src_len = 0;
  int valid = 0;
  std::vector<T> data;  // src_len * dim, final-layernormed
};

// Compact pre-layernorm transformer encoder-decoder with explicit
// reverse-mode gradients. T=float is the training configuration; the
// T=double instantiation exists for finite-difference verification and
// runs the scalar kernel path.
template <typename T>
class Transformer {
 public:
  Transformer(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<T>& parameters() { return params_; }
  const std::vector<T>& parameters() const { return params_; }
  const std::vector<ParamBlock>& parameter_blocks() const { return blocks_; }

  void init_parameters(uint64_t seed);

  // Teacher-forced token-mean cross-entropy. When grads is non-null its
  // size must equal the parameter count; gradients are accumulated into
  // it after zeroing. dropout_rng == nullptr means evaluation mode.
  T forward_loss(const EncodedBatch& batch, Rng* dropout_rng, std::vector<T>* grads) const;

  // Inference path.
  EncodedMemory<T> encode_memory(const std::vector<TokenId>& src) const;
  // Log-probabilities over the vocabulary at the last position of each
  // prefix, all prefixes decoded against the same memory.
  std::vector<std::vector<T>> next_token_logprobs(const EncodedMemory<T>& memory,
                                                  const std::vector<std::vector<TokenId>>&
                                                      prefixes) const;

  bool finite() const;

 private:
  struct Offsets;
  ModelConfig cfg_;
  std::vector<T> params_;
  std::vector<ParamBlock> blocks_;
  std::vector<T> posenc_;  // max_len * dim

  std::size_t alloc_block(const std::string& name, std::size_t size, std::size_t& cursor);
  void build_layout();
};

using Model = Transformer<float>;

}  // namespace styletag
