#include "styletag/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "styletag/kernels.hpp"

namespace styletag {

void NoiseConfig::validate() const {
  if (shuffle_window < 1) throw ConfigError("shuffle_window must be >= 1");
  if (drop_prob < 0.0 || drop_prob > 1.0) throw ConfigError("drop_prob must be in [0,1]");
  if (replace_prob < 0.0 || replace_prob > 1.0) throw ConfigError("replace_prob must be in [0,1]");
}

double lr_at_step(double base_lr, int warmup_steps, int step) {
  if (step < 1) step = 1;
  if (warmup_steps < 1) warmup_steps = 1;
  if (step <= warmup_steps) return base_lr * double(step) / double(warmup_steps);
  return base_lr * std::sqrt(double(warmup_steps) / double(step));
}

std::vector<TokenId> apply_noise(const NoiseConfig& cfg, const std::vector<TokenId>& tokens,
                                 const BpeVocab& vocab, Rng& rng) {
  cfg.validate();
  // non-tag subsequence gets noised; tags stay in place
  std::vector<TokenId> plain;
  std::vector<bool> is_tag_pos(tokens.size(), false);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (vocab.is_tag(tokens[i]))
      is_tag_pos[i] = true;
    else
      plain.push_back(tokens[i]);
  }

  // window-limited shuffle: sort by i + U[0, window)
  std::vector<std::pair<double, TokenId>> keyed(plain.size());
  for (std::size_t i = 0; i < plain.size(); ++i)
    keyed[i] = {double(i) + rng.uniform() * cfg.shuffle_window, plain[i]};
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<TokenId> processed;
  processed.reserve(plain.size());
  for (const auto& [_, id] : keyed) {
    if (rng.uniform() < cfg.drop_prob) continue;
    TokenId out = id;
    if (rng.uniform() < cfg.replace_prob) {
      TokenId first = TokenId(vocab.num_specials());
      TokenId span = TokenId(vocab.size()) - first;
      if (span > 0) out = first + TokenId(rng.uniform_int(uint64_t(span)));
    }
    processed.push_back(out);
  }

  std::vector<TokenId> result;
  result.reserve(tokens.size());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_tag_pos[i]) {
      result.push_back(tokens[i]);
    } else if (cursor < processed.size()) {
      result.push_back(processed[cursor++]);
    }
  }
  return result;
}

TrainResult train_model(Model& model, const BpeVocab& vocab,
                        const std::vector<ParallelPair>& pairs, const TrainConfig& cfg,
                        const NoiseConfig* noise) {
  if (pairs.empty()) throw EmptyCorpusError("no training pairs");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");

  using Enc = std::pair<std::vector<TokenId>, std::vector<TokenId>>;
  std::vector<Enc> pristine;
  pristine.reserve(pairs.size());
  for (const auto& p : pairs)
    pristine.emplace_back(vocab.encode_tokens(p.input), vocab.encode_tokens(p.output));

  std::vector<float>& params = model.parameters();
  std::vector<float> grads(params.size(), 0.0f);
  std::vector<float> adam_m(params.size(), 0.0f);
  std::vector<float> adam_v(params.size(), 0.0f);

  Rng root(cfg.seed);
  TrainResult result;
  int step = 0;
  double initial_loss = -1.0;  // captured from the first batch
  int divergent_epochs = 0;

  std::vector<std::size_t> order(pristine.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Enc> data = pristine;
    if (noise) {
      Rng noise_rng = root.fork(0x4015e000ULL + epoch);
      for (auto& [src, tgt] : data) src = apply_noise(*noise, src, vocab, noise_rng);
    }
    Rng order_rng = root.fork(0x0dde4000ULL + epoch);
    order_rng.shuffle(order);
    Rng dropout_rng = root.fork(0xd4090000ULL + epoch);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(data.size(), start + cfg.batch_size);
      std::vector<Enc> chunk;
      chunk.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) chunk.push_back(data[order[i]]);
      EncodedBatch batch = make_batch(chunk, model.config().max_len);

      float loss;
      try {
        loss = model.forward_loss(batch, model.config().dropout > 0 ? &dropout_rng : nullptr,
                                  &grads);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + ")");
      }
      if (initial_loss < 0.0) initial_loss = loss;

      ++step;
      float lr = float(lr_at_step(cfg.lr, cfg.warmup_steps, step));
      float bc1 = 1.0f - std::pow(float(cfg.beta1), float(step));
      float bc2 = 1.0f - std::pow(float(cfg.beta2), float(step));
      kernels::adam_step(params.data(), adam_m.data(), adam_v.data(), grads.data(), params.size(),
                         lr, float(cfg.beta1), float(cfg.beta2), float(cfg.adam_eps), bc1, bc2);
      if (!model.finite())
        throw NumericError("non-finite parameter after update (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + ")");
      epoch_loss += loss;
      ++batches;
    }
    epoch_loss /= double(batches);
    result.epoch_losses.push_back(epoch_loss);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d loss %.5f lr %.6f\n", epoch, epoch_loss,
                   lr_at_step(cfg.lr, cfg.warmup_steps, step));

    if (epoch_loss > 10.0 * initial_loss) {
      if (++divergent_epochs >= 3)
        throw NumericError("training diverged: loss " + std::to_string(epoch_loss) +
                           " exceeds 10x initial " + std::to_string(initial_loss) +
                           " for 3 consecutive epochs (epoch " + std::to_string(epoch) + ")");
    } else {
      divergent_epochs = 0;
    }

    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(model,
                      cfg.checkpoint_dir + "/" + cfg.checkpoint_name + ".ep" +
                          std::to_string(epoch + 1) + ".ckpt",
                      vocab.fingerprint());
    }
  }
  result.steps = step;

  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    save_checkpoint(model, cfg.checkpoint_dir + "/" + cfg.checkpoint_name + ".ckpt",
                    vocab.fingerprint());
  }
  return result;
}

// ---- checkpoint container ------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};
constexpr uint32_t kVersion = 1;

uint32_t crc_table_entry(uint32_t i) {
  uint32_t c = i;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
  return c;
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw LoadError("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw LoadError("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

uint32_t crc32(const void* data, std::size_t n, uint32_t seed) {
  static uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (uint32_t i = 0; i < 256; ++i) table[i] = crc_table_entry(i);
    ready = true;
  }
  uint32_t c = seed ^ 0xFFFFFFFFu;
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const Model& model, const std::string& path, uint64_t vocab_fingerprint) {
  const ModelConfig& cfg = model.config();
  nlohmann::json header;
  header["layers"] = cfg.layers;
  header["heads"] = cfg.heads;
  header["dim"] = cfg.dim;
  header["ff_dim"] = cfg.ff_dim;
  header["dropout"] = cfg.dropout;
  header["max_len"] = cfg.max_len;
  header["vocab_size"] = cfg.vocab_size;
  header["seed"] = cfg.seed;
  header["role"] = cfg.role;
  char fp[17];
  std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(vocab_fingerprint));
  header["vocab_fingerprint"] = fp;
  std::string hjson = header.dump();

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(hjson.size()));
  out += hjson;
  const auto& params = model.parameters();
  put_u64(out, params.size());
  std::size_t payload_off = out.size();
  out.resize(out.size() + params.size() * 4);
  static_assert(sizeof(float) == 4);
  std::memcpy(out.data() + payload_off, params.data(), params.size() * 4);
  uint32_t crc = crc32(out.data() + payload_off, params.size() * 4);
  put_u32(out, crc);
  write_text_file(path, out);
}

Model load_checkpoint(const std::string& path, const BpeVocab* expected_vocab) {
  std::string in = read_text_file(path);
  std::size_t pos = 0;
  if (in.size() < 12 || std::memcmp(in.data(), kMagic, 4) != 0)
    throw LoadError("not a checkpoint file: " + path);
  pos = 4;
  uint32_t version = get_u32(in, pos);
  if (version != kVersion)
    throw LoadError("checkpoint version mismatch: got " + std::to_string(version));
  uint32_t hlen = get_u32(in, pos);
  if (pos + hlen > in.size()) throw LoadError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, hlen));
  } catch (const std::exception& e) {
    throw LoadError(std::string("checkpoint header parse error: ") + e.what());
  }
  pos += hlen;

  ModelConfig cfg;
  cfg.layers = header.at("layers").get<int>();
  cfg.heads = header.at("heads").get<int>();
  cfg.dim = header.at("dim").get<int>();
  cfg.ff_dim = header.at("ff_dim").get<int>();
  cfg.dropout = header.at("dropout").get<double>();
  cfg.max_len = header.at("max_len").get<int>();
  cfg.vocab_size = header.at("vocab_size").get<int>();
  cfg.seed = header.at("seed").get<uint64_t>();
  cfg.role = header.at("role").get<std::string>();

  uint64_t count = get_u64(in, pos);
  if (pos + count * 4 + 4 > in.size()) throw LoadError("checkpoint truncated");
  Model model(cfg);
  if (model.parameters().size() != count)
    throw LoadError("checkpoint parameter count does not match its config");
  std::memcpy(model.parameters().data(), in.data() + pos, count * 4);
  uint32_t stored_crc_pos_check = crc32(in.data() + pos, count * 4);
  pos += count * 4;
  uint32_t stored = get_u32(in, pos);
  if (stored != stored_crc_pos_check) throw LoadError("checkpoint checksum mismatch (corrupt)");

  if (expected_vocab) {
    if (cfg.vocab_size != int(expected_vocab->size()))
      throw LoadError("checkpoint vocab size " + std::to_string(cfg.vocab_size) +
                      " does not match supplied vocab of size " +
                      std::to_string(expected_vocab->size()));
    char fp[17];
    std::snprintf(fp, sizeof(fp), "%016llx",
                  static_cast<unsigned long long>(expected_vocab->fingerprint()));
    if (header.at("vocab_fingerprint").get<std::string>() != fp)
      throw LoadError("checkpoint was trained with a different vocab");
  }
  return model;
}

}  // namespace styletag
