#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "styletag/corpus.hpp"

using namespace styletag;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path, std::ios::trunc);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("clean_sentence lowercases and tokenizes") {
  auto s = clean_sentence("Please CALL me");
  REQUIRE(s.has_value());
  CHECK(s->tokens == std::vector<std::string>{"please", "call", "me"});
}

TEST_CASE("clean_sentence rejects short sentences") {
  CHECK_FALSE(clean_sentence("ok now").has_value());
  CHECK_FALSE(clean_sentence("").has_value());
  CHECK(clean_sentence("ok go now").has_value());
}

TEST_CASE("clean_sentence rejects mostly numeric lines") {
  // 4 of 5 tokens numeric = 80%, at the rejection threshold
  CHECK_FALSE(clean_sentence("1 2 3 4 ok").has_value());
  CHECK(clean_sentence("1 2 ok go now").has_value());
  CHECK_FALSE(clean_sentence("3.14 1,000 99").has_value());
}

TEST_CASE("clean_sentence rejects email addresses") {
  CHECK_FALSE(clean_sentence("contact bob@enron.com today").has_value());
  CHECK_FALSE(clean_sentence("mail a.b@x.co.uk for details").has_value());
  // @ without a dotted domain is not an email token
  CHECK(clean_sentence("meet @ the office").has_value());
}

TEST_CASE("clean_sentence rejects spurious character runs") {
  CHECK_FALSE(clean_sentence("hello there !!!!").has_value());
  CHECK_FALSE(clean_sentence("wait ----- for it").has_value());
  CHECK(clean_sentence("well -- ok then").has_value());
  // whitespace runs are separators, not artifacts
  CHECK(clean_sentence("too   many   spaces here").has_value());
}

TEST_CASE("clean_sentence is idempotent") {
  std::vector<std::string> inputs = {"Please CALL me", "send the data now",
                                     "could you possibly review it"};
  for (const auto& raw : inputs) {
    auto first = clean_sentence(raw);
    REQUIRE(first.has_value());
    auto second = clean_sentence(detokenize(*first));
    REQUIRE(second.has_value());
    CHECK(first->tokens == second->tokens);
  }
}

TEST_CASE("ingest_corpus dedups and keeps order") {
  auto path =
      write_temp("styletag_corpus1.txt", "send the data\nsend the data\nok go now\n");
  StyleCorpus c = ingest_corpus(path, "s");
  REQUIRE(c.size() == 2);
  CHECK(detokenize(c.sentences[0]) == "send the data");
  CHECK(detokenize(c.sentences[1]) == "ok go now");
}

TEST_CASE("ingest_corpus errors") {
  CHECK_THROWS_AS(ingest_corpus("/nonexistent/styletag.txt", "s"), IoError);
  auto path = write_temp("styletag_corpus2.txt", "a b\n1 2 3\n");
  CHECK_THROWS_AS(ingest_corpus(path, "s"), EmptyCorpusError);
}

TEST_CASE("ingest_corpus preserves order of valid lines") {
  auto path = write_temp("styletag_corpus3.txt", "one two three\nfour five six\nseven eight nine\n");
  StyleCorpus c = ingest_corpus(path, "s");
  REQUIRE(c.size() == 3);
  CHECK(c.sentences[2].tokens[0] == "seven");
}

namespace {

StyleCorpus tiny_corpus(std::size_t n) {
  StyleCorpus c;
  c.style_id = "t";
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s;
    s.tokens = {"tok" + std::to_string(i), "mid", "end"};
    s.raw = detokenize(s.tokens);
    c.sentences.push_back(s);
  }
  return c;
}

}  // namespace

TEST_CASE("bucket_by_score bucket index rule") {
  StyleCorpus c = tiny_corpus(3);
  std::vector<double> scores = {0.95, 1.0, 0.04};
  auto scorer = [&](const Sentence& s) {
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.sentences[i].tokens == s.tokens) return scores[i];
    return 0.0;
  };
  auto buckets = bucket_by_score(c, scorer, 1);
  std::set<int> seen;
  for (const auto& b : buckets) {
    seen.insert(b.bucket_index);
    for (const auto& ss : b.sentences) {
      int expect = std::min(9, int(ss.score * 10));
      CHECK(b.bucket_index == expect);
    }
  }
  CHECK(seen == std::set<int>{0, 9});
}

TEST_CASE("bucket_by_score rejects out-of-range scores") {
  StyleCorpus c = tiny_corpus(1);
  CHECK_THROWS_AS(bucket_by_score(c, [](const Sentence&) { return 1.5; }, 1),
                  ContractViolation);
  CHECK_THROWS_AS(bucket_by_score(c, [](const Sentence&) { return -0.1; }, 1),
                  ContractViolation);
}

TEST_CASE("bucket_by_score splits 80:10:10") {
  StyleCorpus c = tiny_corpus(100);
  auto buckets = bucket_by_score(c, [](const Sentence&) { return 0.99; }, 7);
  std::size_t train = 0, test = 0, dev = 0;
  for (const auto& b : buckets) {
    REQUIRE(b.bucket_index == 9);
    if (b.split == Split::train) train += b.sentences.size();
    if (b.split == Split::test) test += b.sentences.size();
    if (b.split == Split::dev) dev += b.sentences.size();
  }
  CHECK(train == 80);
  CHECK(test == 10);
  CHECK(dev == 10);
}

TEST_CASE("bucket partition covers every sentence exactly once") {
  StyleCorpus c = tiny_corpus(137);
  Rng rng(3);
  auto scorer = [&](const Sentence& s) {
    return double(fnv1a(s.tokens[0].data(), s.tokens[0].size()) % 1000) / 1000.0;
  };
  auto buckets = bucket_by_score(c, scorer, 11);
  std::multiset<std::string> seen;
  for (const auto& b : buckets)
    for (const auto& ss : b.sentences) seen.insert(detokenize(ss.sentence));
  std::multiset<std::string> expected;
  for (const auto& s : c.sentences) expected.insert(detokenize(s));
  CHECK(seen == expected);
}

TEST_CASE("bucketing is deterministic for a fixed seed") {
  StyleCorpus c = tiny_corpus(60);
  auto scorer = [](const Sentence& s) {
    return double(s.tokens[0].size() % 10) / 10.0;
  };
  auto a = bucket_by_score(c, scorer, 5);
  auto b = bucket_by_score(c, scorer, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].bucket_index == b[i].bucket_index);
    REQUIRE(a[i].sentences.size() == b[i].sentences.size());
    for (std::size_t j = 0; j < a[i].sentences.size(); ++j)
      CHECK(a[i].sentences[j].sentence.tokens == b[i].sentences[j].sentence.tokens);
  }
}

TEST_CASE("target_style_train_set picks the P9 train split") {
  StyleCorpus c = tiny_corpus(40);
  auto buckets = bucket_by_score(c, [](const Sentence&) { return 0.95; }, 5);
  StyleCorpus p9 = target_style_train_set(buckets);
  CHECK(p9.size() == 32);  // 40 - 4 test - 4 dev

  auto low = bucket_by_score(c, [](const Sentence&) { return 0.2; }, 5);
  CHECK_THROWS_AS(target_style_train_set(low), EmptyCorpusError);
}
