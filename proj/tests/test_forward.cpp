#include <cmath>
#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "forward.hpp"

using namespace vhj;

namespace {

MeanSe terminal_square(const PathBundle& b) {
  std::vector<double> v(b.n_paths);
  for (long p = 0; p < b.n_paths; ++p) v[p] = std::pow(b.x(p, b.steps)[0], 2);
  return mean_se(v, false);
}

}  // namespace

TEST_CASE("brownian variance") {
  // rho = 0 leaves X = W
  ProblemSpec s = make_problem("custom", {{"dim", 1}, {"T", 2.0}, {"rho", {{"D", 0.0}}}});
  PathBundle b = simulate(s, {0.0, 2.0, 25}, {0.0}, {0.0}, 100000, 17);
  MeanSe m = terminal_square(b);
  CHECK(std::abs(m.mean - 2.0) <= 3 * m.se);
}

TEST_CASE("integrated brownian variance") {
  ProblemSpec s = make_problem("custom", {{"dim", 1}, {"sigma", {{"D", 0.0}}}});
  const int K = 40;
  PathBundle b = simulate(s, {0.0, 1.0, K}, {0.0}, {0.0}, 100000, 18);
  double h = 1.0 / K, target = 0;
  for (int j = 0; j < K; ++j)
    for (int k = 0; k < K; ++k) target += h * h * h * std::min(j, k);
  MeanSe m = terminal_square(b);
  CHECK(std::abs(m.mean - target) <= 3 * m.se);
  CHECK(target == doctest::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("initial values and control start") {
  ProblemSpec s = make_problem("lq");
  PathBundle b = simulate(s, {0.0, 1.0, 10}, {0.7}, {-0.4}, 100, 1);
  for (long p = 0; p < b.n_paths; ++p) {
    CHECK(b.x(p, 0)[0] == 0.7);
    CHECK(b.i(p, 0)[0] == -0.4);
  }
}

TEST_CASE("antithetic pairs mirror the increments") {
  ProblemSpec s = make_problem("kpz");
  SimOptions o;
  o.antithetic = true;
  PathBundle b = simulate(s, {0.0, 1.0, 10}, {0.0}, {0.0}, 1000, 3, o);
  CHECK(b.x(0, 10)[0] == doctest::Approx(-b.x(1, 10)[0]));
  std::vector<double> v(b.n_paths);
  for (long p = 0; p < b.n_paths; ++p) v[p] = b.x(p, 10)[0];
  CHECK(std::abs(mean_se(v, true).mean) < 1e-12);
}

TEST_CASE("zero tilt reproduces the untilted bundle") {
  ProblemSpec s = make_problem("lq");
  TimeGrid g{0.0, 1.0, 20};
  PathBundle a = simulate(s, g, {0.5}, {0.0}, 3000, 21);
  PathBundle b = simulate_tilted(s, g, {0.5}, {0.0}, 3000, 21,
                                 [](int, double, const double*, const double*, double* out) { out[0] = 0; }, 1.0);
  CHECK(std::memcmp(a.X.data(), b.X.data(), a.X.size() * sizeof(double)) == 0);
}

TEST_CASE("constant tilt shifts the control mean") {
  ProblemSpec s = make_problem("kpz");
  TimeGrid g{0.0, 1.0, 20};
  PathBundle b = simulate_tilted(s, g, {0.0}, {0.0}, 20000, 5,
                                 [](int, double, const double*, const double*, double* out) { out[0] = 3.0; }, 3.0);
  std::vector<double> v(b.n_paths);
  for (long p = 0; p < b.n_paths; ++p) v[p] = b.i(p, 20)[0];
  MeanSe m = mean_se(v, false);
  CHECK(std::abs(m.mean - 3.0) <= 4 * m.se);
}

TEST_CASE("bundle round trip") {
  ProblemSpec s = make_problem("lq");
  PathBundle a = simulate(s, {0.0, 1.0, 8}, {0.1}, {0.2}, 500, 4);
  std::string path = "vhj_test_bundle.bin";
  dump_bundle(a, path);
  PathBundle b = load_bundle(path);
  std::remove(path.c_str());
  CHECK(b.n_paths == a.n_paths);
  CHECK(b.steps == a.steps);
  CHECK(b.seed == a.seed);
  CHECK(b.X == a.X);
  CHECK(b.I == a.I);
  CHECK_THROWS(load_bundle("does_not_exist.bin"));
}

TEST_CASE("moment diagnostics on kpz") {
  ProblemSpec s = make_problem("kpz");
  PathBundle b = simulate(s, {0.0, 1.0, 20}, {0.0}, {0.0}, 20000, 6);
  MomentReport r = moment_diagnostics(b, s, 2);
  CHECK(r.pass);
  CHECK(r.sup_moment_X > 0.9);
}

TEST_CASE("time grid checks") {
  TimeGrid g{0.0, 1.0, 0};
  CHECK_THROWS(g.check(1.0));
  TimeGrid h{0.0, 2.0, 10};
  CHECK_THROWS(h.check(1.0));
}
