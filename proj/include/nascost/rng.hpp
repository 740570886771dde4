#pragma once

// Counter-based random numbers: every draw is a pure function of its
// coordinates, so streams for different edges never interfere.

#include <cstdint>
#include <initializer_list>

namespace nascost {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_counter(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Uniform in the open interval (0, 1).
inline double uniform_open(std::initializer_list<std::uint64_t> parts) {
  const std::uint64_t bits = hash_counter(parts) >> 11;  // 53 bits
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace nascost
