#pragma once

// Counter-based random streams (Philox 4x32-10). Every draw is a pure function
// of (seed, stream, counter), so work split across threads or processes
// reproduces the serial output bit for bit. Streams are keyed on integer
// tuples such as (part, layer, purpose).

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "pkde/error.hpp"

namespace pkde {

namespace detail {

inline void philox_round(std::array<uint32_t, 4>& ctr, const std::array<uint32_t, 2>& key) {
  constexpr uint32_t kMul0 = 0xD2511F53u;
  constexpr uint32_t kMul1 = 0xCD9E8D57u;
  const uint64_t p0 = uint64_t(kMul0) * ctr[0];
  const uint64_t p1 = uint64_t(kMul1) * ctr[2];
  ctr = {uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], uint32_t(p1),
         uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], uint32_t(p0)};
}

}  // namespace detail

// One 128-bit block of the Philox 4x32 generator with 10 rounds.
inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          std::array<uint32_t, 2> key) {
  constexpr uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    detail::philox_round(ctr, key);
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

// splitmix64 finalizer; used to spread integer tuples into stream keys.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t stream_key(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x5EEDBA5EDEADBEEFull;
  for (uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream)
      : key_{uint32_t(seed), uint32_t(seed >> 32)},
        stream_{uint32_t(stream), uint32_t(stream >> 32)} {}

  uint32_t next_u32() {
    if (pos_ == 4) refill();
    return block_[pos_++];
  }

  uint64_t next_u64() {
    const uint64_t lo = next_u32();
    const uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_double_open() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Unbiased uniform integer in [0, n).
  uint32_t uniform_int(uint32_t n) {
    if (n == 0) throw_invalid("uniform_int: n must be positive");
    const uint32_t limit = uint32_t(-n) % n;  // 2^32 mod n
    while (true) {
      const uint32_t x = next_u32();
      if (x >= limit) return x % n;
    }
  }

  // Knuth's product method, chunked so the mean may exceed exp-underflow range.
  int next_poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw_invalid("next_poisson: bad mean");
    int total = 0;
    while (mean > 0.0) {
      const double chunk = mean > 30.0 ? 30.0 : mean;
      mean -= chunk;
      const double limit = std::exp(-chunk);
      double prod = 1.0;
      int k = 0;
      do {
        ++k;
        prod *= next_double_open();
      } while (prod > limit);
      total += k - 1;
    }
    return total;
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = uniform_int(uint32_t(i + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  void refill() {
    block_ = philox4x32({uint32_t(counter_), uint32_t(counter_ >> 32), stream_[0], stream_[1]},
                        key_);
    ++counter_;
    pos_ = 0;
  }

  std::array<uint32_t, 2> key_;
  std::array<uint32_t, 2> stream_;
  uint64_t counter_ = 0;
  std::array<uint32_t, 4> block_{};
  int pos_ = 4;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace pkde
