#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>

namespace vhj {

// Philox4x32-10 (Salmon et al., SC'11). Stateless: every draw is a pure
// function of (key, counter), so paths can be generated in any order.
struct Philox {
  static void round(uint32_t c[4], const uint32_t k[2]) {
    constexpr uint64_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    uint64_t p0 = M0 * c[0], p1 = M1 * c[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    uint32_t n0 = hi1 ^ c[1] ^ k[0];
    uint32_t n2 = hi0 ^ c[3] ^ k[1];
    c[0] = n0; c[1] = lo1; c[2] = n2; c[3] = lo0;
  }
  static void block(uint64_t seed, const uint32_t ctr[4], uint32_t out[4]) {
    uint32_t k[2] = {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
    uint32_t c[4] = {ctr[0], ctr[1], ctr[2], ctr[3]};
    for (int r = 0; r < 10; ++r) {
      round(c, k);
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    for (int i = 0; i < 4; ++i) out[i] = c[i];
  }
};

inline double u53(uint32_t hi, uint32_t lo) {
  uint64_t v = (static_cast<uint64_t>(hi) << 21) ^ (lo >> 11);
  return (static_cast<double>(v & ((1ull << 53) - 1)) + 0.5) * 0x1.0p-53;
}

// Two standard normals for (path, step, block). stream separates independent uses.
inline void normal_pair(uint64_t seed, uint64_t path, uint32_t step, uint32_t block, uint32_t stream,
                        double& z0, double& z1) {
  uint32_t ctr[4] = {static_cast<uint32_t>(path), static_cast<uint32_t>(path >> 32), step,
                     (stream << 24) ^ block};
  uint32_t out[4];
  Philox::block(seed, ctr, out);
  double u1 = u53(out[0], out[1]), u2 = u53(out[2], out[3]);
  double r = std::sqrt(-2.0 * std::log(u1));
  double th = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(th);
  z1 = r * std::sin(th);
}

// k-th standard normal of (path, step) in a given stream.
inline double normal_at(uint64_t seed, uint64_t path, uint32_t step, uint32_t k, uint32_t stream) {
  double a, b;
  normal_pair(seed, path, step, k / 2, stream, a, b);
  return (k % 2 == 0) ? a : b;
}

}  // namespace vhj
