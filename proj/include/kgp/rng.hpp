#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace kgp {

using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b, ...). Streams depend only on the key,
/// never on how many draws other streams consumed.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> key = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * key.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto k : key) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// A 64-bit seed for the stream (seed, key...), for APIs that take a seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> key = {}) {
  return derive_rng(seed, key)();
}

}  // namespace kgp
