#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dropact {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; decorrelates nearby integer seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a (master, index...) path. Independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(master);
  for (auto p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  return s;
}

/// Named streams so that, e.g., mask sampling never perturbs initialization.
enum class Stream : std::uint64_t { Init = 1, Masks = 2, Order = 3, Data = 4, Split = 5 };

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(derive_seed(seed, {static_cast<std::uint64_t>(stream)}));
}

} // namespace dropact
