#pragma once
// Philox4x32-10 counter-based generator (Salmon et al. 2011 parameters).
//
// Stream contract, fixed across platforms:
//   key     = (seed low 32 bits, seed high 32 bits)
//   counter = (block low, block high, stream low, stream high)
// Each block yields four 32-bit words consumed in order. Doubles are built from
// two consecutive words (high word first) with 53 significant bits.
// normal() is Box-Muller on two uniforms and caches the second variate;
// its values depend on the platform libm for log/sin/cos.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace nonrev {

class Philox {
 public:
  using ctr_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static ctr_type block(ctr_type c, key_type k) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += W0;
        k[1] += W1;
      }
      std::uint64_t p0 = std::uint64_t(M0) * c[0];
      std::uint64_t p1 = std::uint64_t(M1) * c[2];
      std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
      std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
  }

  Philox(std::uint64_t seed, std::uint64_t stream) {
    key_ = {std::uint32_t(seed), std::uint32_t(seed >> 32)};
    stream_ = stream;
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }
  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }
  // Uniform on (0,1), never 0 or 1.
  double uniform() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
  double exponential() { return -std::log(uniform()); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }
  // Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do x = next_u64();
    while (x >= lim);
    return x % n;
  }
  int sign() { return (next_u32() & 1u) ? 1 : -1; }

 private:
  void refill() {
    ctr_type c{std::uint32_t(counter_), std::uint32_t(counter_ >> 32), std::uint32_t(stream_),
               std::uint32_t(stream_ >> 32)};
    buf_ = block(c, key_);
    ++counter_;
    pos_ = 0;
  }

  key_type key_{};
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  ctr_type buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nonrev
