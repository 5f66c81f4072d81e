#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "styletag/bpe.hpp"
#include "styletag/tagdata.hpp"

using namespace styletag;

namespace {

Sentence sent(const std::string& text) {
  Sentence s;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ') {
      if (!cur.empty()) s.tokens.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) s.tokens.push_back(cur);
  s.raw = text;
  return s;
}

MarkerSet markers_of(const std::vector<std::pair<std::string, double>>& phrases) {
  MarkerSet m;
  m.style_id = "t";
  double sum = 0.0;
  for (const auto& [_, p] : phrases) sum += p;
  for (const auto& [phrase, p] : phrases) m.phrases[phrase] = {1.0, p / sum};
  return m;
}

// reinsert the recorded spans in place of the tags
std::vector<std::string> reconstruct(const std::vector<std::string>& tagged,
                                     const std::vector<AttributeSpan>& spans) {
  std::vector<std::string> out;
  std::size_t next = 0;
  for (const auto& tok : tagged) {
    if (is_tag_token(tok)) {
      REQUIRE(next < spans.size());
      Sentence phrase = sent(spans[next].phrase);
      out.insert(out.end(), phrase.tokens.begin(), phrase.tokens.end());
      ++next;
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("match_markers prefers the longest match") {
  MarkerSet m = markers_of({{"could you please", 0.6}, {"please", 0.4}});
  auto spans = match_markers(sent("could you please send it"), m);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 3);
  CHECK(spans[0].phrase == "could you please");
}

TEST_CASE("match_markers returns empty when nothing matches") {
  MarkerSet m = markers_of({{"thanks", 1.0}});
  CHECK(match_markers(sent("send the data"), m).empty());
}

TEST_CASE("match_markers finds adjacent non-overlapping repeats") {
  MarkerSet m = markers_of({{"please", 1.0}});
  auto spans = match_markers(sent("please please go"), m);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 1);
  CHECK(spans[1].start == 1);
  CHECK(spans[1].end == 2);
}

TEST_CASE("replace pairs tag every matched span in replace-all mode") {
  MarkerSet m = markers_of({{"ok", 0.5}, {"bland", 0.5}});
  StyleCorpus c;
  c.sentences = {sent("the food was ok and bland")};
  auto pairs = make_replace_pairs(c, m, kReplaceAll, 1, 20);
  REQUIRE(pairs.size() == 1);
  CHECK(detokenize(pairs[0].input) == "the food was ok and bland");
  CHECK(detokenize(pairs[0].output) == "the food was [TAG]_0 and [TAG]_1");
  CHECK(pairs[0].mode == PairMode::replace);
}

TEST_CASE("markerless sentences become identity replace pairs") {
  MarkerSet m = markers_of({{"zzz", 1.0}});
  StyleCorpus c;
  c.sentences = {sent("send the data now")};
  auto pairs = make_replace_pairs(c, m, kReplaceAll, 1, 20);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].input == pairs[0].output);
}

TEST_CASE("sampled replace pairs are deterministic under a seed") {
  MarkerSet m = markers_of({{"please", 0.7}, {"thanks", 0.3}});
  StyleCorpus c;
  for (int i = 0; i < 30; ++i)
    c.sentences.push_back(sent("please item" + std::to_string(i) + " thanks"));
  auto a = make_replace_pairs(c, m, 0.5, 99, 20);
  auto b = make_replace_pairs(c, m, 0.5, 99, 20);
  REQUIRE(a.size() == b.size());
  bool any_tag = false, any_plain = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].output == b[i].output);
    for (const auto& t : a[i].output) any_tag |= is_tag_token(t);
    any_plain |= a[i].input == a[i].output;
  }
  CHECK(any_tag);
  CHECK(any_plain);  // sampling leaves some spans unreplaced
}

TEST_CASE("add pairs delete from input and tag in output") {
  MarkerSet m = markers_of({{"you would like to", 0.5}, {"please", 0.5}});
  StyleCorpus c;
  c.sentences = {sent("if you would like to come to the event please rsvp")};
  auto pairs = make_add_pairs(c, m, 20);
  REQUIRE(pairs.size() == 1);
  CHECK(detokenize(pairs[0].input) == "if come to the event rsvp");
  CHECK(detokenize(pairs[0].output) == "if [TAG]_0 come to the event [TAG]_1 rsvp");
  CHECK(pairs[0].mode == PairMode::add);
}

TEST_CASE("add pairs skip markerless sentences") {
  MarkerSet m = markers_of({{"please", 1.0}});
  StyleCorpus c;
  c.sentences = {sent("no courtesy here"), sent("please send it")};
  auto pairs = make_add_pairs(c, m, 20);
  REQUIRE(pairs.size() == 1);
  CHECK(detokenize(pairs[0].output) == "[TAG]_0 send it");
}

TEST_CASE("generator pairs invert the tagging") {
  MarkerSet m = markers_of({{"please", 1.0}});
  StyleCorpus c;
  c.sentences = {sent("please send me the file"), sent("send me the file")};
  auto pairs = make_generator_pairs(c, m, 20);
  REQUIRE(pairs.size() == 2);
  CHECK(detokenize(pairs[0].input) == "[TAG]_0 send me the file");
  CHECK(detokenize(pairs[0].output) == "please send me the file");
  CHECK(pairs[1].input == pairs[1].output);  // markerless identity
  CHECK(pairs[0].mode == PairMode::generator);
}

TEST_CASE("combined pairs concatenate and shuffle deterministically") {
  MarkerSet m = markers_of({{"please", 1.0}});
  StyleCorpus add_corpus, rep_corpus;
  for (int i = 0; i < 10; ++i) add_corpus.sentences.push_back(sent("please a" + std::to_string(i)));
  for (int i = 0; i < 7; ++i) rep_corpus.sentences.push_back(sent("b" + std::to_string(i) + " x"));
  auto add = make_add_pairs(add_corpus, m, 20);
  auto rep = make_replace_pairs(rep_corpus, m, kReplaceAll, 1, 20);
  auto combined = make_combined_pairs(add, rep, 3);
  CHECK(combined.size() == add.size() + rep.size());
  auto again = make_combined_pairs(add, rep, 3);
  for (std::size_t i = 0; i < combined.size(); ++i) CHECK(combined[i].input == again[i].input);
  auto empty_add = make_combined_pairs({}, rep, 3);
  CHECK(empty_add.size() == rep.size());
}

TEST_CASE("positional tags count ordinally and clamp at the budget") {
  std::vector<std::pair<std::string, double>> phrases;
  StyleCorpus c;
  std::string text;
  for (int i = 0; i < 25; ++i) {
    phrases.push_back({"m" + std::to_string(i), 1.0});
    text += (i ? " " : "");
    text += "m" + std::to_string(i);
    text += " w" + std::to_string(i);
  }
  MarkerSet m = markers_of(phrases);
  c.sentences = {sent(text)};
  auto pairs = make_add_pairs(c, m, 20);
  REQUIRE(pairs.size() == 1);
  int ordinal = 0;
  for (const auto& tok : pairs[0].output) {
    auto t = BpeVocab::parse_tag_surface(tok);
    if (!t) continue;
    CHECK(*t == std::min(ordinal, 19));
    ++ordinal;
  }
  CHECK(ordinal == 25);
}

TEST_CASE("pairs TSV round-trips") {
  MarkerSet m = markers_of({{"please", 1.0}});
  StyleCorpus c;
  c.sentences = {sent("please send it"), sent("go now fast")};
  auto pairs = make_replace_pairs(c, m, kReplaceAll, 1, 20);
  auto loaded = pairs_from_tsv(pairs_to_tsv(pairs));
  REQUIRE(loaded.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].input == pairs[i].input);
    CHECK(loaded[i].output == pairs[i].output);
    CHECK(loaded[i].mode == pairs[i].mode);
  }
  CHECK_THROWS_AS(pairs_from_tsv("no tabs here\n"), LoadError);
}

TEST_CASE("random-sentence reconstruction and complementarity") {
  // random sentences over a small vocab with embedded markers
  std::vector<std::string> content = {"send", "data", "file", "now", "team", "check",
                                      "report", "when", "done", "call"};
  std::vector<std::string> marker_words = {"please", "kindly", "thanks"};
  MarkerSet m = markers_of({{"please", 0.4}, {"kindly", 0.3}, {"thanks", 0.3}});
  Rng rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    Sentence s;
    int len = 3 + int(rng.uniform_int(9));
    for (int i = 0; i < len; ++i) {
      if (rng.uniform() < 0.25)
        s.tokens.push_back(marker_words[rng.uniform_int(marker_words.size())]);
      else
        s.tokens.push_back(content[rng.uniform_int(content.size())]);
    }
    s.raw = detokenize(s.tokens);
    auto spans = match_markers(s, m);

    StyleCorpus c;
    c.sentences = {s};
    // replace-mode reconstruction
    auto rep = make_replace_pairs(c, m, kReplaceAll, 1, 20);
    REQUIRE(rep.size() == 1);
    CHECK(reconstruct(rep[0].output, spans) == s.tokens);

    // add-mode complementarity
    auto add = make_add_pairs(c, m, 20);
    if (!spans.empty()) {
      REQUIRE(add.size() == 1);
      std::vector<std::string> out_no_tags;
      for (const auto& t : add[0].output)
        if (!is_tag_token(t)) out_no_tags.push_back(t);
      CHECK(add[0].input == out_no_tags);
      CHECK(reconstruct(add[0].output, spans) == s.tokens);
    } else {
      CHECK(add.empty());
    }
  }
}
