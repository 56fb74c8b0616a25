#pragma once

#include <cstdint>
#include <random>

namespace prism {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Named, independent random streams derived from one seed. A stream is a
/// pure function of (seed, stream id, counter), so per-item generators can be
/// created in any order without changing their output.
enum class Stream : std::uint64_t {
  init = 1,
  shuffle = 2,
  dropout = 3,
  synth_global = 4,
  synth_gene = 5,
  test = 6,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  return std::mt19937_64(splitmix64(a ^ splitmix64(counter + 0x632BE59BD9B4E019ull)));
}

}  // namespace prism
