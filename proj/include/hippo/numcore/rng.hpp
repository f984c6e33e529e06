#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

#include "hippo/numcore/error.hpp"

namespace hippo {

// Philox4x32-10 block function (Salmon et al., Random123). Pure function of
// (counter, key); used as the engine behind Rng.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u, kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
    const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

// FNV-1a over bytes; stable stream tags derived from names.
inline std::uint64_t hash_tag(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based, splittable generator. The draw at position n of a stream is
// a pure function of (seed, stream, n), so consumers that split their own
// stream are unaffected by how many values other consumers take.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t position() const noexcept { return counter_; }

  // Child generator on a stream derived from this one and `tag`. Does not
  // advance this generator.
  Rng split(std::uint64_t tag) const {
    const auto block = philox4x32(
        {std::uint32_t(tag), std::uint32_t(tag >> 32), std::uint32_t(stream_), std::uint32_t(stream_ >> 32)},
        {0x5EED5EEDu, 0x0DDBA11u});
    return Rng(seed_, (std::uint64_t(block[0]) << 32 | block[1]) ^ (std::uint64_t(block[2]) << 32 | block[3]));
  }

  // 64 bits at an absolute position of this stream.
  std::uint64_t at(std::uint64_t n) const {
    const auto block = philox4x32({std::uint32_t(n), std::uint32_t(n >> 32), std::uint32_t(stream_),
                                   std::uint32_t(stream_ >> 32)},
                                  {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
    return std::uint64_t(block[0]) << 32 | block[1];
  }

  std::uint64_t next_u64() { return at(counter_++); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ParameterError("uniform_int: empty range");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates; std::shuffle is implementation-defined across platforms.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = std::size_t(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace hippo
