#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace semcom {

// Deterministic random source. All sampling goes through this class instead
// of <random> distributions, whose output is implementation-defined; the
// methods here produce the same stream on every platform for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n).
  size_t uniform_index(size_t n);

  // Standard normal via Box-Muller (no cached spare, stream stays simple).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_index(i + 1)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Mixes a master seed with stream identifiers so independent consumers
// (per-image masks, per-epoch shuffles, ...) get decorrelated streams.
uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0);

}  // namespace semcom
