#include "semcom/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace semcom {

size_t Rng::uniform_index(size_t n) {
  if (n == 0) throw std::invalid_argument("rng: uniform_index over empty range");
  // Modulo bias is < 2^-50 for the range sizes used here.
  return static_cast<size_t>(next_u64() % n);
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b, uint64_t c) {
  // splitmix64 finalizer over the mixed words.
  uint64_t x = master;
  for (uint64_t w : {a, b, c}) {
    x += 0x9e3779b97f4a7c15ULL + w;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    x = z ^ (z >> 31);
  }
  return x;
}

}  // namespace semcom
