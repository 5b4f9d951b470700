#pragma once

#include <cstdint>
#include <random>

namespace pagan {

using Rng = std::mt19937_64;

// splitmix64 step; used to derive independent child seeds so that
// parallel order over stacks cannot change any stream.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng make_rng(uint64_t seed, uint64_t salt = 0) { return Rng(mix_seed(seed, salt)); }

}  // namespace pagan
