#pragma once

#include <string>
#include <vector>

#include "styletag/common.hpp"

namespace styletag {

// Synthetic corpus generator so the pipeline runs without external
// data. neutral: style 0 is plain text, style 1 inserts courtesy
// phrases (occasionally leaking into style 0, as real informal text
// does). polar: two disjoint sentiment lexicons with weak cross-leak
// plus style-exclusive summary clauses.
struct ToyConfig {
  enum class Mode { neutral, polar };
  Mode mode = Mode::neutral;
  std::size_t size = 2000;  // unique sentences per style
  uint64_t seed = 42;
  double leak_rate = 0.05;
  double summary_rate = 0.05;  // polar only
};

ToyConfig::Mode toy_mode_from_name(const std::string& name);

struct ToyCorpora {
  std::vector<std::string> style0;
  std::vector<std::string> style1;
};

ToyCorpora generate_toy(const ToyConfig& cfg);

// Writes style0.txt / style1.txt under dir.
void write_toy_corpus(const ToyConfig& cfg, const std::string& dir);

}  // namespace styletag
