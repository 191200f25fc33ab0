#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace lnm {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Child seed for a path of integers below a parent seed:
///   s <- parent; for each p: s <- splitmix64(s ^ splitmix64(p)).
/// Experiment code uses paths of the form (fold, model-kind tag, ...), so a
/// rerun with the same master seed reproduces every fit bit for bit.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                           std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = parent;
  for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p));
  return s;
}

/// 64-bit FNV-1a, used to fold strings (content hashes, ids) into seeds.
inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace lnm
