#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace ramix {

/// SplitMix64 step. Used for seeding and for hashing keys into seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Order-sensitive hash of a list of 64-bit words.
inline constexpr std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC908ull;
  for (std::uint64_t w : words) {
    std::uint64_t s = h ^ w;
    h = splitmix64(s);
  }
  return h;
}

/**
 * Deterministic random stream identified by (seed, stream id).
 *
 * The generator is xoshiro256** seeded through SplitMix64, and every
 * distribution is implemented here rather than taken from <random>, so a
 * given (seed, stream) pair yields the same draws on every platform.
 *
 *   uniform()  53 high bits of the next word scaled to [0, 1)
 *   normal()   Box-Muller cosine branch from two uniforms, no caching
 */
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {
    std::uint64_t sm = mix_seed({seed, stream});
    for (auto& word : state_) word = splitmix64(sm);
  }

  /// Raw-state constructor, for checking against published xoshiro vectors.
  static RngStream from_state(const std::array<std::uint64_t, 4>& state) noexcept {
    RngStream r(0, 0);
    r.state_ = state;
    return r;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = -n % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= limit) return x % n;
    }
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(idx[i - 1], idx[j]);
    }
    return idx;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace ramix
