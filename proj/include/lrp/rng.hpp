#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "lrp/lattice.hpp"

namespace lrp {

// Derives a child seed from a parent seed and a list of tags.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> tags) {
  uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ULL);
  for (uint64_t t : tags) h = mix64(h ^ t);
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(mix64(seed)) {}

  uint64_t next() { return eng_(); }

  // Uniform in [0,1).
  double uniform() { return to_unit(eng_()); }

  // Uniform in (0,1], safe for log().
  double uniform_pos() { return 1.0 - uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    return std::uniform_int_distribution<uint64_t>(0, n - 1)(eng_);
  }

  int64_t range(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(eng_);
  }

  double normal() { return normal_(eng_); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace lrp
