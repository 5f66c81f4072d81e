#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace styletag {

// Error taxonomy used across the library. Callers catch the base type
// unless a contract distinguishes the failure mode.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct EmptyCorpusError : Error {
  using Error::Error;
};
struct ContractViolation : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct LoadError : Error {
  using Error::Error;
};

// A cleaned sentence: lowercased whitespace-separated tokens plus the
// original surface string.
struct Sentence {
  std::vector<std::string> tokens;
  std::string raw;

  bool operator==(const Sentence& o) const { return tokens == o.tokens; }
};

std::string detokenize(const std::vector<std::string>& tokens);

inline std::string detokenize(const Sentence& s) { return detokenize(s.tokens); }

struct StyleCorpus {
  std::vector<Sentence> sentences;
  std::string style_id;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

// splitmix64: tiny deterministic RNG. Same sequence on every platform,
// which the reproducibility contract needs; std:: distributions are not
// portable across standard libraries.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed = 0) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) { return n == 0 ? 0 : next() % n; }

  // standard normal via Box-Muller
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // derive an independent stream, e.g. per epoch or per bucket
  Rng fork(uint64_t salt) {
    Rng r(state ^ (salt * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
    r.next();
    return r;
  }
};

// FNV-1a, used for artifact checksums in run manifests.
uint64_t fnv1a(const void* data, std::size_t n, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace styletag
