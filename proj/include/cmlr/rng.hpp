#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cmlr {

// Derives an independent stream seed from (seed, tag) so that every random
// decision in a run is pinned to the master seed plus a fixed structural tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() {
    // Fresh distribution per call: no hidden pair cache, so interleaving
    // draws of different kinds stays reproducible.
    return std::normal_distribution<double>(0.0, 1.0)(engine_);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double sign() { return index(2) == 0 ? -1.0 : 1.0; }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

// Fisher-Yates image: image[i] is the destination of source row i.
inline std::vector<std::size_t> random_permutation_image(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.index(i)]);
  }
  return perm;
}

}  // namespace cmlr
