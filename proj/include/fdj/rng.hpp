#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fdj {

// One step of the splitmix64 sequence: advances `state` and returns the next
// output. Used for seed derivation so independent random streams can be
// spawned from (base, stream) pairs without correlated state.
std::uint64_t splitmix64_next(std::uint64_t& state);

// Deterministically derives a child seed from a base seed and a stream id.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// FNV-1a 64-bit hash; used wherever a deterministic string hash is needed
// (token hashing for the pseudo-embedding provider, cache keys).
std::uint64_t fnv1a64(std::string_view s);

// Thin wrapper around std::mt19937_64 that pins the algorithms the standard
// leaves implementation-defined (bounded integers, unit doubles, shuffling,
// subset sampling), so runs replay bit-for-bit on any platform. The engine
// itself is bit-exact per the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Unbiased integer in [0, n): rejection sampling against 2^64 mod n.
  std::uint64_t below(std::uint64_t n);

  // Double in [0, 1) built from the top 53 bits.
  double unit_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), each k-subset equally likely (Floyd's
  // algorithm). Returned in insertion order, not uniformly shuffled.
  std::vector<std::uint64_t> sample_indices(std::uint64_t n, std::uint64_t k);

 private:
  std::mt19937_64 eng_;
};

}  // namespace fdj
