#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "styletag/decode.hpp"
#include "styletag/train.hpp"

using namespace styletag;

namespace {

StyleCorpus corpus_of(const std::vector<std::string>& lines) {
  StyleCorpus c;
  c.style_id = "t";
  for (const auto& l : lines) {
    Sentence s;
    std::string cur;
    for (char ch : l) {
      if (ch == ' ') {
        if (!cur.empty()) s.tokens.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) s.tokens.push_back(cur);
    s.raw = l;
    c.sentences.push_back(s);
  }
  return c;
}

BpeVocab toy_vocab() {
  // each word twice so merges can form whole-word tokens
  StyleCorpus c = corpus_of({"alpha beta gamma delta", "epsilon zeta eta theta",
                             "iota kappa lambda mu", "nu xi omicron pi",
                             "alpha beta gamma delta", "epsilon zeta eta theta",
                             "iota kappa lambda mu", "nu xi omicron pi"});
  return BpeVocab::train(c, 300, 20);
}

ModelConfig small_config(const BpeVocab& vocab, uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.dim = 32;
  cfg.ff_dim = 64;
  cfg.dropout = 0.0;
  cfg.max_len = 24;
  cfg.vocab_size = int(vocab.size());
  cfg.seed = seed;
  cfg.role = "tagger";
  return cfg;
}

std::vector<ParallelPair> copy_task_pairs(Rng& rng, int count) {
  std::vector<std::string> words = {"alpha", "beta",  "gamma", "delta", "epsilon",
                                    "zeta",  "eta",   "theta", "iota",  "kappa",
                                    "lambda", "mu",   "nu",    "xi",    "omicron", "pi"};
  std::vector<ParallelPair> pairs;
  for (int i = 0; i < count; ++i) {
    ParallelPair p;
    p.mode = PairMode::generator;
    int len = 2 + int(rng.uniform_int(4));
    for (int j = 0; j < len; ++j) p.input.push_back(words[rng.uniform_int(words.size())]);
    p.output = p.input;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

TEST_CASE("lr schedule warms up then decays") {
  CHECK(lr_at_step(1.0, 100, 1) == doctest::Approx(0.01));
  CHECK(lr_at_step(1.0, 100, 100) == doctest::Approx(1.0));
  CHECK(lr_at_step(1.0, 100, 400) == doctest::Approx(0.5));
  CHECK(lr_at_step(1.0, 100, 50) < lr_at_step(1.0, 100, 100));
}

TEST_CASE("apply_noise with zero probabilities and window 1 is the identity") {
  BpeVocab vocab = toy_vocab();
  NoiseConfig nc{1, 0.0, 0.0};
  Rng rng(7);
  Sentence s;
  s.tokens = {"alpha", "beta", "gamma", "delta"};
  auto ids = vocab.encode(s);
  CHECK(apply_noise(nc, ids, vocab, rng) == ids);
}

TEST_CASE("apply_noise drop_prob 1 empties tag-free input") {
  BpeVocab vocab = toy_vocab();
  NoiseConfig nc{2, 1.0, 0.0};
  Rng rng(7);
  Sentence s;
  s.tokens = {"alpha", "beta"};
  auto ids = vocab.encode(s);
  CHECK(apply_noise(nc, ids, vocab, rng).empty());
}

TEST_CASE("apply_noise never touches tag tokens") {
  BpeVocab vocab = toy_vocab();
  Sentence s;
  s.tokens = {"[TAG]_0", "alpha", "beta", "[TAG]_1", "gamma", "delta", "epsilon"};
  auto ids = vocab.encode(s);
  for (uint64_t seed = 0; seed < 30; ++seed) {
    NoiseConfig nc{3, 0.5, 0.5};
    Rng rng(seed);
    auto noised = apply_noise(nc, ids, vocab, rng);
    std::vector<TokenId> tags_in, tags_out;
    for (auto id : ids)
      if (vocab.is_tag(id)) tags_in.push_back(id);
    for (auto id : noised)
      if (vocab.is_tag(id)) tags_out.push_back(id);
    CHECK(tags_in == tags_out);
  }
  // drop everything: only the tags remain, in order
  NoiseConfig drop_all{1, 1.0, 0.0};
  Rng rng(5);
  auto only_tags = apply_noise(drop_all, ids, vocab, rng);
  REQUIRE(only_tags.size() == 2);
  CHECK(only_tags[0] == vocab.tag_id(0));
  CHECK(only_tags[1] == vocab.tag_id(1));
}

TEST_CASE("apply_noise shuffle keeps displacement under the window") {
  BpeVocab vocab = toy_vocab();
  NoiseConfig nc{3, 0.0, 0.0};
  Sentence s;
  s.tokens = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};
  auto ids = vocab.encode(s);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto noised = apply_noise(nc, ids, vocab, rng);
    REQUIRE(noised.size() == ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      // find where ids[i] went (ids are unique here)
      std::size_t j = std::find(noised.begin(), noised.end(), ids[i]) - noised.begin();
      long long disp = static_cast<long long>(j) - static_cast<long long>(i);
      CHECK(std::llabs(disp) < nc.shuffle_window);
    }
  }
}

TEST_CASE("lr zero leaves parameters untouched") {
  BpeVocab vocab = toy_vocab();
  Model model(small_config(vocab));
  auto before = model.parameters();
  Rng rng(3);
  auto pairs = copy_task_pairs(rng, 8);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.lr = 0.0;
  tc.warmup_steps = 1;
  train_model(model, vocab, pairs, tc);
  CHECK(model.parameters() == before);
}

TEST_CASE("training is bitwise deterministic") {
  BpeVocab vocab = toy_vocab();
  Rng rng(3);
  auto pairs = copy_task_pairs(rng, 20);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.warmup_steps = 10;
  tc.seed = 99;

  Model a(small_config(vocab));
  Model b(small_config(vocab));
  auto ra = train_model(a, vocab, pairs, tc);
  auto rb = train_model(b, vocab, pairs, tc);
  CHECK(a.parameters() == b.parameters());
  CHECK(ra.epoch_losses == rb.epoch_losses);
}

TEST_CASE("overfit oracle: copy task decodes exactly") {
  BpeVocab vocab = toy_vocab();
  Rng rng(17);
  auto pairs = copy_task_pairs(rng, 50);
  Model model(small_config(vocab, 11));
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 16;
  tc.lr = 3e-3;
  tc.warmup_steps = 40;
  tc.seed = 4;
  TrainResult tr = train_model(model, vocab, pairs, tc);
  CHECK(tr.epoch_losses.back() < tr.epoch_losses.front());

  BeamConfig bc;
  bc.beam = 2;
  int exact = 0;
  for (int i = 0; i < 50; ++i) {
    auto ids = vocab.encode_tokens(pairs[i].input);
    auto hyps = beam_search(model, ids, bc);
    REQUIRE(!hyps.empty());
    std::vector<TokenId> out;
    for (TokenId id : hyps[0].ids)
      if (id != BpeVocab::kEos) out.push_back(id);
    if (out == ids) ++exact;
  }
  CHECK(double(exact) / 50.0 >= 0.98);
}

TEST_CASE("divergence aborts with diagnostics") {
  BpeVocab vocab = toy_vocab();
  Rng rng(3);
  auto pairs = copy_task_pairs(rng, 16);
  Model model(small_config(vocab));
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 8;
  tc.lr = 30.0;  // absurd rate forces the loss to blow up
  tc.warmup_steps = 1;
  CHECK_THROWS_AS(train_model(model, vocab, pairs, tc), NumericError);
}

TEST_CASE("checkpoint round-trip preserves loss and config") {
  BpeVocab vocab = toy_vocab();
  Model model(small_config(vocab));
  Rng rng(3);
  auto pairs = copy_task_pairs(rng, 8);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.lr = 1e-3;
  train_model(model, vocab, pairs, tc);

  auto dir = std::filesystem::temp_directory_path() / "styletag_ckpt_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "m.ckpt").string();
  save_checkpoint(model, path, vocab.fingerprint());
  Model loaded = load_checkpoint(path, &vocab);
  CHECK(loaded.parameters() == model.parameters());
  CHECK(loaded.config().role == model.config().role);

  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> enc = {
      {vocab.encode_tokens(pairs[0].input), vocab.encode_tokens(pairs[0].output)}};
  EncodedBatch batch = make_batch(enc, 24);
  CHECK(double(loaded.forward_loss(batch, nullptr, nullptr)) ==
        doctest::Approx(double(model.forward_loss(batch, nullptr, nullptr))).epsilon(1e-9));
}

TEST_CASE("checkpoint loading rejects corruption and mismatches") {
  BpeVocab vocab = toy_vocab();
  Model model(small_config(vocab));
  auto dir = std::filesystem::temp_directory_path() / "styletag_ckpt_test2";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "m.ckpt").string();
  save_checkpoint(model, path, vocab.fingerprint());

  // truncation
  std::string bytes = read_text_file(path);
  write_text_file(path + ".trunc", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path + ".trunc"), LoadError);

  // flipped payload byte -> checksum mismatch
  std::string corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x5A;
  write_text_file(path + ".bad", corrupt);
  CHECK_THROWS_AS(load_checkpoint(path + ".bad"), LoadError);

  // wrong magic
  std::string magic = bytes;
  magic[0] = 'X';
  write_text_file(path + ".magic", magic);
  CHECK_THROWS_AS(load_checkpoint(path + ".magic"), LoadError);

  // vocab mismatch
  StyleCorpus other = corpus_of({"different words here entirely", "other tokens now appear"});
  BpeVocab mismatched = BpeVocab::train(other, 150, 20);
  CHECK_THROWS_AS(load_checkpoint(path, &mismatched), LoadError);
}

TEST_CASE("periodic checkpoints are written") {
  BpeVocab vocab = toy_vocab();
  Model model(small_config(vocab));
  Rng rng(3);
  auto pairs = copy_task_pairs(rng, 8);
  auto dir = std::filesystem::temp_directory_path() / "styletag_ckpt_test3";
  std::filesystem::remove_all(dir);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 4;
  tc.lr = 1e-3;
  tc.checkpoint_every = 2;
  tc.checkpoint_dir = dir.string();
  tc.checkpoint_name = "tagger";
  train_model(model, vocab, pairs, tc);
  CHECK(std::filesystem::exists(dir / "tagger.ep2.ckpt"));
  CHECK(std::filesystem::exists(dir / "tagger.ckpt"));
}
