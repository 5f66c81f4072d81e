#include "styletag/toy.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <unordered_set>

namespace styletag {

namespace {

const std::vector<std::string> kVerbs = {"send",     "review",  "call",    "update",
                                         "check",    "schedule", "forward", "confirm",
                                         "finish",   "share",    "collect", "archive"};
const std::vector<std::string> kObjects = {
    "the report",   "the file",     "the numbers",  "the agenda",   "the draft",
    "the invoice",  "the schedule", "the summary",  "the contract", "the slides",
    "the data",     "the notes",    "the proposal", "the budget"};
const std::vector<std::string> kModifiers = {"", "latest", "final", "updated", "revised"};
const std::vector<std::string> kWhen = {
    "today",           "by friday",        "this afternoon", "before the call",
    "next week",       "by noon",          "after the meeting", "tomorrow morning",
    "by end of day",   "before thursday",  "later this week", "at your earliest convenience",
    "before the review", "over the weekend", "by early monday", "during the afternoon"};
const std::vector<std::string> kLeadIns = {"",          "",      "also",
                                           "as discussed", "for the record", "going forward",
                                           "as a reminder", "on that note"};

const std::vector<std::string> kCourtesyPrefix = {"please", "kindly", "could you please",
                                                  "if possible"};
const std::vector<std::string> kCourtesySuffix = {"thanks", "thank you", "thanks again",
                                                  "many thanks"};

// polar mode: two disjoint phrase lexicons inserted around the same
// neutral bases — brusque urgency versus courtesy
const std::vector<std::string> kBrusquePrefix = {"right away", "immediately", "asap",
                                                 "no excuses"};
const std::vector<std::string> kBrusqueSuffix = {"without delay", "top priority", "hurry up",
                                                 "no slacking"};

// sentence-final summary clauses, exclusive to their style
const char* kNegSummary = "but overall it sucked";
const char* kPosSummary = "but overall it was perfect";

template <typename T>
const T& pick(const std::vector<T>& pool, Rng& rng) {
  return pool[rng.uniform_int(pool.size())];
}

std::string object_phrase(Rng& rng) {
  const std::string& obj = pick(kObjects, rng);
  const std::string& mod = pick(kModifiers, rng);
  if (mod.empty()) return obj;
  return "the " + mod + obj.substr(3);  // "the report" -> "the latest report"
}

std::string neutral_base(Rng& rng) {
  std::string s;
  const std::string& lead = pick(kLeadIns, rng);
  if (!lead.empty()) s = lead + " ";
  s += pick(kVerbs, rng);
  s += " " + object_phrase(rng);
  s += " " + pick(kWhen, rng);
  if (rng.uniform() < 0.55) s += " and " + pick(kVerbs, rng) + " " + object_phrase(rng);
  return s;
}

std::string with_phrases(const std::string& base, const std::vector<std::string>& prefixes,
                         const std::vector<std::string>& suffixes, Rng& rng,
                         double both_rate = 0.35) {
  double roll = rng.uniform();
  double prefix_only = (1.0 - both_rate) * 0.6;
  double suffix_only = (1.0 - both_rate) * 0.4;
  if (roll < prefix_only) return pick(prefixes, rng) + " " + base;
  if (roll < prefix_only + suffix_only) return base + " " + pick(suffixes, rng);
  return pick(prefixes, rng) + " " + base + " " + pick(suffixes, rng);
}

std::string with_courtesy(const std::string& base, Rng& rng) {
  return with_phrases(base, kCourtesyPrefix, kCourtesySuffix, rng);
}

// label 0 inserts brusque phrases, label 1 courtesy phrases, around the
// same neutral bases
std::string polar_sentence(Rng& rng, int label, const ToyConfig& cfg) {
  const auto& own_prefix = label == 0 ? kBrusquePrefix : kCourtesyPrefix;
  const auto& own_suffix = label == 0 ? kBrusqueSuffix : kCourtesySuffix;
  const auto& opp_prefix = label == 0 ? kCourtesyPrefix : kBrusquePrefix;
  const auto& opp_suffix = label == 0 ? kCourtesySuffix : kBrusqueSuffix;
  double roll = rng.uniform();
  if (roll < cfg.summary_rate) {
    // style-exclusive summary clause over an unmarked base
    return neutral_base(rng) + " " + (label == 0 ? kNegSummary : kPosSummary);
  }
  roll -= cfg.summary_rate;
  constexpr double kMixedRate = 0.08;
  if (roll < kMixedRate) {
    // mixed sentence carrying both lexicons, either arrangement
    if (rng.uniform() < 0.5)
      return pick(opp_prefix, rng) + " " + neutral_base(rng) + " " + pick(own_suffix, rng);
    return pick(own_prefix, rng) + " " + neutral_base(rng) + " " + pick(opp_suffix, rng);
  }
  roll -= kMixedRate;
  if (roll < cfg.leak_rate) {
    // lone opposite-lexicon phrase under the own-style label; these are
    // what keep single inline phrases from being fully predictive
    return with_phrases(neutral_base(rng), opp_prefix, opp_suffix, rng, 0.0);
  }
  // mostly one phrase per sentence: the style signal stays mild enough
  // that a polarizing suffix can overturn it
  return with_phrases(neutral_base(rng), own_prefix, own_suffix, rng, 0.15);
}

std::vector<std::string> generate_unique(std::size_t n, Rng& rng,
                                         const std::function<std::string(Rng&)>& make) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t attempts = 0, limit = n * 400 + 10000;
  while (out.size() < n) {
    if (++attempts > limit)
      throw Error("toy generator cannot produce enough unique sentences; lower the size");
    std::string s = make(rng);
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

ToyConfig::Mode toy_mode_from_name(const std::string& name) {
  if (name == "neutral") return ToyConfig::Mode::neutral;
  if (name == "polar") return ToyConfig::Mode::polar;
  throw ConfigError("unknown toy mode: " + name + " (expected neutral or polar)");
}

ToyCorpora generate_toy(const ToyConfig& cfg) {
  ToyCorpora out;
  Rng rng0(cfg.seed ^ 0x70a0c0de00ULL);
  Rng rng1(cfg.seed ^ 0x70a0c0de11ULL);
  if (cfg.mode == ToyConfig::Mode::neutral) {
    out.style0 = generate_unique(cfg.size, rng0, [&](Rng& r) {
      std::string base = neutral_base(r);
      if (r.uniform() < cfg.leak_rate) return with_courtesy(base, r);
      return base;
    });
    out.style1 = generate_unique(cfg.size, rng1,
                                 [&](Rng& r) { return with_courtesy(neutral_base(r), r); });
  } else {
    out.style0 =
        generate_unique(cfg.size, rng0, [&](Rng& r) { return polar_sentence(r, 0, cfg); });
    out.style1 =
        generate_unique(cfg.size, rng1, [&](Rng& r) { return polar_sentence(r, 1, cfg); });
  }
  return out;
}

void write_toy_corpus(const ToyConfig& cfg, const std::string& dir) {
  ToyCorpora corpora = generate_toy(cfg);
  std::filesystem::create_directories(dir);
  auto dump = [&](const std::vector<std::string>& lines, const std::string& name) {
    std::string text;
    for (const auto& l : lines) {
      text += l;
      text += '\n';
    }
    write_text_file(dir + "/" + name, text);
  };
  dump(corpora.style0, "style0.txt");
  dump(corpora.style1, "style1.txt");
}

}  // namespace styletag
