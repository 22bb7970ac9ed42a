#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace mtp {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent child seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(master) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Balanced V-fold labels for n rows (fold sizes differ by at most one).
inline std::vector<int> random_folds(std::size_t n, int v, std::uint64_t seed) {
  auto perm = random_permutation(n, seed);
  std::vector<int> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(v));
  return fold;
}

}  // namespace mtp
