#pragma once

#include <string>
#include <vector>

#include "styletag/bpe.hpp"
#include "styletag/model.hpp"
#include "styletag/tagdata.hpp"

namespace styletag {

struct NoiseConfig {
  int shuffle_window = 3;
  double drop_prob = 0.1;
  double replace_prob = 0.1;

  void validate() const;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 3e-4;
  int warmup_steps = 4000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  uint64_t seed = 7;
  int checkpoint_every = 0;       // epochs between periodic checkpoints, 0 = final only
  std::string checkpoint_dir;     // empty = no checkpoints written
  std::string checkpoint_name = "model";
  bool verbose = false;
};

struct TrainResult {
  std::vector<double> epoch_losses;
  int steps = 0;
};

// Linear warmup to lr then inverse-sqrt decay; step is 1-based.
double lr_at_step(double base_lr, int warmup_steps, int step);

// Denoising corruption of an id sequence: window-limited shuffle via
// random-key sort, token drops, and random replacements. Tag tokens are
// exempt from all three operations.
std::vector<TokenId> apply_noise(const NoiseConfig& cfg, const std::vector<TokenId>& tokens,
                                 const BpeVocab& vocab, Rng& rng);

// Mini-batch Adam over the encoded pairs. When noise is given, the
// inputs (and only the inputs) are re-noised at the start of every
// epoch. Aborts with NumericError if the loss diverges.
TrainResult train_model(Model& model, const BpeVocab& vocab,
                        const std::vector<ParallelPair>& pairs, const TrainConfig& cfg,
                        const NoiseConfig* noise = nullptr);

// Versioned binary checkpoint: magic, config header JSON, float32
// little-endian payload, trailing CRC32.
void save_checkpoint(const Model& model, const std::string& path, uint64_t vocab_fingerprint);
Model load_checkpoint(const std::string& path, const BpeVocab* expected_vocab = nullptr);

uint32_t crc32(const void* data, std::size_t n, uint32_t seed = 0);

}  // namespace styletag
