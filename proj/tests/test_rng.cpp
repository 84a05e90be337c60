#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "forward.hpp"
#include "parallel.hpp"
#include "rng.hpp"

using namespace vhj;

namespace {

void check_block(uint64_t seed, std::vector<uint32_t> ctr, std::vector<uint32_t> want) {
  uint32_t out[4];
  Philox::block(seed, ctr.data(), out);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == want[i]);
}

}  // namespace

TEST_CASE("philox known answers") {
  check_block(0, {0, 0, 0, 0}, {0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  check_block(0xffffffffffffffffull, {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
              {0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  check_block(0x299f31d0a4093822ull, {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
              {0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("normals have unit variance") {
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int p = 0; p < n; ++p) {
    double z = normal_at(42, p, 3, 1, 0);
    s += z;
    s2 += z * z;
  }
  double m = s / n, v = s2 / n - m * m;
  CHECK(std::abs(m) < 4.0 / std::sqrt(n));
  CHECK(std::abs(v - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("streams and steps are independent draws") {
  CHECK(normal_at(1, 0, 0, 0, 0) != normal_at(1, 0, 0, 0, 1));
  CHECK(normal_at(1, 0, 0, 0, 0) != normal_at(1, 0, 1, 0, 0));
  CHECK(normal_at(1, 0, 0, 0, 0) == normal_at(1, 0, 0, 0, 0));
}

TEST_CASE("bundle does not depend on the thread count") {
  ProblemSpec s = make_problem("lq", json::object());
  TimeGrid g{0.0, 1.0, 20};
  set_thread_count(1);
  PathBundle a = simulate(s, g, {0.3}, {0.1}, 5000, 9);
  set_thread_count(4);
  PathBundle b = simulate(s, g, {0.3}, {0.1}, 5000, 9);
  set_thread_count(0);
  REQUIRE(a.X.size() == b.X.size());
  CHECK(std::memcmp(a.X.data(), b.X.data(), a.X.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.I.data(), b.I.data(), a.I.size() * sizeof(double)) == 0);
}
