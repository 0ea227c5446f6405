#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace momineq {

// splitmix64 finalizer; full-period bijection on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based substream derivation: the same (seed, path) always yields the
/// same engine seed, independent of how many other streams were derived.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(seed);
  for (std::uint64_t k : path) s = mix64(s ^ mix64(k));
  return s;
}

inline std::uint64_t hash_label(std::string_view label) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  return std::mt19937_64(derive_seed(seed, path));
}

}  // namespace momineq
