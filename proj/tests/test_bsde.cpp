#include <cmath>

#include "bsde.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace vhj;

namespace {

// rho = 0: X does not see I, and with f = 0 Y is a plain conditional expectation.
ProblemSpec decoupled_spec(bool zero_f) {
  ProblemSpec s = make_problem("kpz");
  s.rho = [](const double*, double* out) { out[0] = 0; };
  if (zero_f) s.f_closed = [](const double*, const double*, double) { return 0.0; };
  return s;
}

double sample_mean_g(const ProblemSpec& s, const PathBundle& b) {
  double m = 0;
  for (long p = 0; p < b.n_paths; ++p) m += s.g(b.x(p, b.steps));
  return m / b.n_paths;
}

}  // namespace

TEST_CASE("martingale example without shifts") {
  ProblemSpec s = decoupled_spec(true);
  s.g = [](const double* x) { return x[0] * x[0]; };
  PathBundle b = simulate(s, {0.0, 1.0, 20}, {0.5}, {0.0}, 20000, 11);
  BackwardSolution sol = solve_penalized(s, b, 0.0, {});
  CHECK(std::abs(sol.u - 1.25) <= 3 * sol.u_se);
  CHECK(sol.pathwise_mean == doctest::Approx(sample_mean_g(s, b)).epsilon(1e-12));
  CHECK(sol.constraint_mass == 0.0);
}

TEST_CASE("decoupled control converges to E[g]") {
  // f = a^2/2 and rho = 0: the best control is I = 0 at no cost, so u_n -> E[cos(x + W_T)]
  ProblemSpec s = decoupled_spec(false);
  PathBundle b = simulate(s, {0.0, 1.0, 20}, {0.5}, {0.0}, 20000, 11);
  PenalizedSolver solver(s, b, {});
  BackwardSolution lo = solver.solve(1.0), hi = solver.solve(64.0);
  double m = sample_mean_g(s, b);
  CHECK(lo.u > hi.u);
  CHECK(std::abs(hi.u - m) < 2e-3);
  CHECK(std::abs(m - std::cos(0.5) * std::exp(-0.5)) <= 3 * hi.u_se);
}

TEST_CASE("constant terminal with f = 0") {
  ProblemSpec s = decoupled_spec(true);
  s.g = [](const double*) { return 0.7; };
  PathBundle b = simulate(s, {0.0, 1.0, 10}, {0.0}, {0.0}, 5000, 2);
  for (double n : {1.0, 8.0}) {
    BackwardSolution sol = solve_penalized(s, b, n, {});
    CHECK(sol.u == doctest::Approx(0.7).epsilon(1e-7));
    CHECK(sol.constraint_mass < 1e-7);
  }
}

TEST_CASE("kpz with constant terminal approaches the constant") {
  ProblemSpec s = make_problem("kpz", {{"g", "const"}, {"g_const", 0.3}});
  PathBundle b = simulate(s, {0.0, 1.0, 20}, {0.0}, {0.0}, 10000, 3);
  PenalizedSolver solver(s, b, {});
  BackwardSolution lo = solver.solve(1.0), hi = solver.solve(64.0);
  CHECK(lo.u > hi.u);
  CHECK(std::abs(hi.u - 0.3) < 2e-3);
}

TEST_CASE("terminal condition and nonnegative constraint increments") {
  ProblemSpec s = make_problem("kpz");
  PathBundle b = simulate(s, {0.0, 1.0, 20}, {0.0}, {0.0}, 10000, 4);
  BackwardSolution sol = solve_penalized(s, b, 8.0, {});
  for (long p = 0; p < b.n_paths; ++p) CHECK(sol.y(p, b.steps) == s.g(b.x(p, b.steps)));
  for (double k : sol.dK) CHECK(k >= 0.0);
  for (std::size_t j = 0; j < sol.V.size(); ++j) CHECK(std::abs(sol.V[j]) <= 8.0 + 1e-12);
}

TEST_CASE("ladder decreases towards the cole hopf value") {
  ProblemSpec s = make_problem("kpz");
  LadderReport r = run_ladder(s, {0.0, 1.0, 20}, {0.0}, {0.0}, 20000, 5, {1, 4, 16}, {});
  CHECK(r.monotone);
  CHECK(r.levels[0].u > r.levels[2].u);
  CHECK(r.levels[2].constraint_mass < r.levels[0].constraint_mass);
  double ch = cole_hopf_kpz(0.5, s.g, 1, 0.0, 1.0, {0.0});
  CHECK(std::abs(r.final_u - ch) < 0.05);
}

TEST_CASE("polynomial basis in two dimensions") {
  ProblemSpec s = make_problem("kpz", {{"dim", 2}});
  RegressionConfig reg = RegressionConfig::from_json({{"basis", "polynomial"}, {"degree", 2}});
  LadderReport r = run_ladder(s, {0.0, 1.0, 10}, {0.0, 0.0}, {0.0, 0.0}, 10000, 6, {16}, reg);
  double ch = cole_hopf_kpz(0.5, s.g, 2, 0.0, 1.0, {0.0, 0.0});
  CHECK(std::abs(r.final_u - ch) < 0.1);
}

TEST_CASE("y dependent generator converges under picard") {
  ProblemSpec s = make_problem("custom", {{"dim", 1}, {"F", {{"quad", 1.0}, {"y_coef", 0.5}}}, {"g", {{{"coef", 1.0}}}}});
  PathBundle b = simulate(s, {0.0, 1.0, 10}, {0.0}, {0.0}, 5000, 7);
  RegressionConfig reg;
  reg.picard_iters = 4;
  BackwardSolution sol = solve_penalized(s, b, 16.0, reg);
  // F = z^2/2 + y/2 with g = 1 solves to u = exp(-T/2)
  CHECK(sol.u == doctest::Approx(std::exp(-0.5)).epsilon(0.02));
  CHECK(sol.max_residual < 1e-3);
}

TEST_CASE("single picard sweep needs dt L_F below one") {
  ProblemSpec s = make_problem("custom", {{"dim", 1}, {"F", {{"quad", 1.0}, {"y_coef", 20.0}}}});
  PathBundle b = simulate(s, {0.0, 1.0, 10}, {0.0}, {0.0}, 500, 7);
  RegressionConfig reg;
  reg.picard_iters = 1;
  CHECK_THROWS_AS(PenalizedSolver(s, b, reg), ConfigError);
}

TEST_CASE("ladder verdicts") {
  LadderReport r;
  r.schedule = {1, 2};
  r.tol_u = 1e-2;
  r.levels = {{1, 0.50, 0.001, 0.10, 0.001}, {2, 0.49, 0.001, 0.04, 0.001}};
  ladder_verdicts(r);
  CHECK(r.monotone);
  CHECK(r.constraint_decay);
  r.levels[1].u = 0.52;
  ladder_verdicts(r);
  CHECK_FALSE(r.monotone);
  CHECK(r.monotone_violations.size() == 1);
  r.levels[1].constraint_mass = 0.2;
  ladder_verdicts(r);
  CHECK_FALSE(r.constraint_decay);
}

TEST_CASE("configuration errors") {
  ProblemSpec s = make_problem("kpz");
  TimeGrid g{0.0, 1.0, 5};
  CHECK_THROWS_AS(run_ladder(s, g, {0.0}, {0.0}, 200, 1, {4, 2}, {}), ConfigError);
  CHECK_THROWS_AS(run_ladder(s, g, {0.0}, {0.0}, 200, 1, {}, {}), ConfigError);
  CHECK_THROWS_AS(check_a_independence(s, g, {0.0}, {{0.0}}, 200, {1}, {1}, {}), ConfigError);
  CHECK_THROWS_AS(RegressionConfig::from_json({{"basis", "wavelet"}}), ConfigError);
  CHECK_THROWS_AS(RegressionConfig::from_json({{"clip", 0.7}}), ConfigError);
  PathBundle b = simulate(s, g, {0.0}, {0.0}, 200, 1);
  PenalizedSolver solver(s, b, {});
  CHECK_THROWS_AS(solver.solve(-1.0), ConfigError);
}

TEST_CASE("a dependence fades along the ladder") {
  ProblemSpec s = make_problem("kpz");
  AIndependence r = check_a_independence(s, {0.0, 1.0, 20}, {0.0}, {{0.0}, {1.0}}, 20000, {8, 8}, {1, 64}, {});
  REQUIRE(r.ladders.size() == 2);
  double gap1 = std::abs(r.ladders[0].levels[0].u - r.ladders[1].levels[0].u);
  double gap64 = std::abs(r.ladders[0].levels[1].u - r.ladders[1].levels[1].u);
  CHECK(gap64 < 0.25 * gap1);
  CHECK(r.max_discrepancy == doctest::Approx(gap64));
}

TEST_CASE("report round trips its levels") {
  ProblemSpec s = make_problem("kpz");
  LadderReport r = run_ladder(s, {0.0, 1.0, 5}, {0.0}, {0.0}, 1000, 1, {1, 2}, {});
  json j = r.to_json();
  CHECK(j["levels"].size() == 2);
  CHECK_FALSE(j["levels"][0].contains("seconds"));
  CHECK(r.to_json(true)["levels"][0].contains("seconds"));
  CHECK(r.to_csv().rfind("n,u,stderr,constraint_mass", 0) == 0);
}
