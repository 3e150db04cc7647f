#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace ssvmr {

using Rng = std::mt19937_64;

// Derives an independent generator from a base seed and a list of stream
// tags (epoch, purpose, ...). Streams never depend on how much randomness
// another stream consumed.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq mixed(words.begin(), words.end());
  return Rng(mixed);
}

// The helpers below avoid the std distributions, whose output is not
// specified bit-exactly across standard libraries.

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

// Box-Muller, one draw per call.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace ssvmr
