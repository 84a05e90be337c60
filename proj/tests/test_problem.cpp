#include <cmath>
#include <random>

#include "doctest.h"
#include "problem.hpp"

using namespace vhj;

TEST_CASE("numeric conjugate of lambda |z|^2") {
  for (double lam : {0.25, 0.5, 2.0}) {
    ProblemSpec s = make_problem("kpz", {{"lambda", lam}});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-4, 4);
    double x = 0;
    for (int k = 0; k < 100; ++k) {
      double a = U(rng);
      double f = conjugate_numeric(s, {}, &x, &a, U(rng)).value;
      CHECK(f == doctest::Approx(a * a / (4 * lam)).epsilon(1e-9));
      CHECK(std::abs(f - a * a / (4 * lam)) <= 1e-6);
    }
  }
}

TEST_CASE("numeric conjugate of |z|^4/4") {
  ProblemSpec s = make_problem("custom", {{"dim", 1}, {"F", {{"power", {{{"coef", 0.25}, {"exp", 4.0}}}}}}});
  double x = 0;
  for (double a : {-3.0, -0.7, 0.0, 0.01, 1.0, 2.5}) {
    ConjugateResult r = conjugate_numeric(s, {}, &x, &a, 0.0);
    CHECK(std::abs(r.value - 0.75 * std::pow(std::abs(a), 4.0 / 3.0)) <= 1e-6);
    CHECK(r.argmin[0] == doctest::Approx(-std::cbrt(a)).epsilon(1e-4));
  }
}

TEST_CASE("conjugate in two dimensions") {
  ProblemSpec s = make_problem("kpz", {{"dim", 2}, {"lambda", 0.5}});
  double x[2] = {0, 0}, a[2] = {1.0, -2.0};
  CHECK(std::abs(conjugate_numeric(s, {}, x, a, 0.0).value - 2.5) <= 1e-6);
}

TEST_CASE("registry problems validate") {
  for (auto name : {"kpz", "lq", "power_utility", "exp_utility"}) {
    CAPTURE(name);
    ValidationReport r = validate(make_problem(name));
    CHECK(r.pass);
    CHECK_FALSE(r.structural_error);
  }
  CHECK_THROWS_AS(make_problem("nope"), ConfigError);
}

TEST_CASE("nonconvex F is flagged") {
  ProblemSpec s = make_problem("kpz");
  s.F = [](const double*, double, const double* z) { return std::cos(3 * z[0]) + z[0] * z[0]; };
  ValidationReport r = validate(s);
  CHECK_FALSE(r.pass);
  bool convex_flag = false;
  for (auto& f : r.findings)
    if (f.check == "F convex in z (sampled)") convex_flag = !f.pass;
  CHECK(convex_flag);
}

TEST_CASE("structural errors") {
  ProblemSpec s = make_problem("kpz");
  s.g = nullptr;
  ValidationReport r = validate(s);
  CHECK(r.structural_error);

  ProblemSpec t = make_problem("kpz", {{"dim", 2}});
  t.b = [](const double*, double* out) { out[0] = 0; };
  CHECK(validate(t).structural_error);

  ProblemSpec u = make_problem("kpz");
  u.T = 0;
  CHECK(validate(u).structural_error);
}

TEST_CASE("growth exponent rules") {
  GrowthProfile g;
  g.p = 1.0;
  bool p_flag = false;
  for (auto& f : check_growth_rules(g))
    if (f.check == "p > 1") p_flag = !f.pass;
  CHECK(p_flag);
}

TEST_CASE("understated L_F fails the crosscheck") {
  ProblemSpec s = make_problem("custom", {{"dim", 1}, {"F", {{"quad", 1.0}, {"y_coef", 2.0}}}, {"growth", {{"L_F", 0.5}}}});
  CHECK_FALSE(validate(s).pass);
  CHECK_THROWS_AS(conjugate_crosscheck(s, {}, 200, 3), AssumptionError);
  ProblemSpec ok = make_problem("custom", {{"dim", 1}, {"F", {{"quad", 1.0}, {"y_coef", 2.0}}}});
  CHECK(conjugate_crosscheck(ok, {}, 200, 3).lipschitz_ok);
}

TEST_CASE("closed form and generator agree") {
  ProblemSpec s = make_problem("exp_utility");
  auto gen = make_generator(s);
  double x = 0.2, a = 0.8;
  CHECK(gen(&x, &a, 0.0) == doctest::Approx(conjugate_numeric(s, {}, &x, &a, 0.0).value).epsilon(1e-7));
}

TEST_CASE("custom problem errors") {
  CHECK_THROWS_AS(load_custom_problem(json::object()), ConfigError);
  CHECK_THROWS_AS(load_custom_problem({{"dim", 1}, {"T", -1.0}}), ConfigError);
  CHECK_THROWS_AS(load_custom_problem({{"dim", 1}, {"F", {{"quad", -1.0}}}}), ConfigError);
}
