#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace mcdrop {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used to key streams by name.
constexpr std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based random stream: element i of stream (seed, a, b) is a pure
/// function of (seed, a, b, i). Dropout masks key on (run seed, pass index,
/// layer index), so results do not depend on evaluation order or threading.
class CounterStream {
 public:
  constexpr explicit CounterStream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0)
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xd6e8feb86659fd93ULL))) {}

  /// Lane selects an independent sub-stream; normal() uses lanes 1 and 2.
  constexpr std::uint64_t bits(std::uint64_t counter, std::uint64_t lane = 0) const {
    return splitmix64(key_ ^ splitmix64(counter ^ (lane << 58)));
  }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const;
  /// Standard normal by Box-Muller.
  double normal(std::uint64_t counter) const;

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

/// Sequential generator over a CounterStream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) : stream_(seed, a, b) {}

  std::uint64_t next_bits() { return stream_.bits(counter_++); }
  double uniform() { return stream_.uniform(counter_++); }
  double normal() { return stream_.normal(counter_++); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  CounterStream stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace mcdrop
