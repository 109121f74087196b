#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace signhmm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable child seed from a base seed and a list of integer coordinates.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = splitmix64(base);
  for (auto p : parts) s = splitmix64(s ^ p);
  return s;
}

// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace signhmm
