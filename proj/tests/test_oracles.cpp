#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

using namespace vhj;

namespace {

LQMatrices scalar_lq(double A, double B, double C, double D, double Q, double R, double S, double T) {
  LQMatrices m;
  auto one = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
  m.A = one(A);
  m.B = one(B);
  m.C = one(C);
  m.D = one(D);
  m.Q = one(Q);
  m.S = one(S);
  m.R = R;
  m.T = T;
  return m;
}

}  // namespace

TEST_CASE("cole hopf of a constant terminal") {
  auto g = [](const double*) { return 0.8; };
  CHECK(cole_hopf_kpz(0.5, g, 1, 0.0, 1.0, {0.3}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(cole_hopf_kpz(0.5, g, 2, 0.5, 1.0, {0.3, -1.0}) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("cole hopf at the horizon returns g") {
  auto g = [](const double* x) { return std::cos(x[0]); };
  CHECK(cole_hopf_kpz(0.5, g, 1, 1.0, 1.0, {0.4}) == std::cos(0.4));
}

TEST_CASE("cole hopf of a linear terminal") {
  // g = x gives u = x - lambda (T - t)
  auto g = [](const double* x) { return x[0]; };
  CHECK(cole_hopf_kpz(0.5, g, 1, 0.0, 2.0, {0.1}) == doctest::Approx(0.1 - 1.0).epsilon(1e-10));
}

TEST_CASE("cole hopf rejects overflow") {
  auto g = [](const double* x) { return -1e3 * x[0] * x[0]; };
  CHECK_THROWS_AS(cole_hopf_kpz(5.0, g, 1, 0.0, 1.0, {0.0}), NumericalError);
}

TEST_CASE("riccati without cost is zero") {
  RiccatiSolution r = riccati_lq(scalar_lq(0.3, 1, 0, 1, 0, 1, 0, 1));
  CHECK(std::abs(r.value(0.0, {1.3})) < 1e-12);
}

TEST_CASE("riccati without control") {
  // B = 0: u = E[x_T^2 + int x^2] with dX = dW, so u = 2 x^2 + 3/2 at T = 1
  RiccatiSolution r = riccati_lq(scalar_lq(0, 0, 0, 1, 1, 1, 1, 1));
  CHECK(r.value(0.0, {0.5}) == doctest::Approx(2 * 0.25 + 1.5).epsilon(1e-9));
  CHECK(r.max_asymmetry == 0.0);
}

TEST_CASE("riccati scalar regulator matches tanh") {
  // P' = P^2 - 1, P(T) = 0 gives P(t) = tanh(T - t)
  RiccatiSolution r = riccati_lq(scalar_lq(0, 1, 0, 0, 1, 1, 0, 1));
  CHECK(r.value(0.0, {1.0}) == doctest::Approx(std::tanh(1.0)).epsilon(1e-9));
}

TEST_CASE("fd of a constant terminal") {
  ProblemSpec s = make_problem("kpz", {{"g", "const"}, {"g_const", -0.4}});
  FDResult r = fd_hjb_1d(s, FDGrid1D{});
  for (double v : r.u0) CHECK(v == doctest::Approx(-0.4).epsilon(1e-12));
}

TEST_CASE("fd is monotone in the terminal") {
  ProblemSpec lo = make_problem("kpz");
  ProblemSpec hi = lo;
  hi.g = [](const double* x) { return std::cos(x[0]) + 0.2 / (1 + x[0] * x[0]); };
  FDGrid1D fd;
  fd.nx = 60;
  FDResult a = fd_hjb_1d(lo, fd), b = fd_hjb_1d(hi, fd);
  REQUIRE(a.u0.size() == b.u0.size());
  for (std::size_t j = 0; j < a.u0.size(); ++j) CHECK(a.u0[j] <= b.u0[j]);
}

TEST_CASE("fd matches the closed forms") {
  ProblemSpec k = make_problem("kpz");
  FDResult r = fd_hjb_1d(k, FDGrid1D{});
  CHECK(std::abs(r.value(0.0) - cole_hopf_kpz(0.5, k.g, 1, 0.0, 1.0, {0.0})) < 1e-3);
  CHECK(r.saturated);
  ProblemSpec lq = make_problem("lq");
  RiccatiSolution ric = riccati_lq(LQMatrices::from_params(lq.params));
  FDResult f = fd_hjb_1d(lq, FDGrid1D{});
  for (double x : {0.0, 0.5, 1.0}) CHECK(std::abs(f.value(x) - ric.value(0.0, {x})) < 1e-2);
}

TEST_CASE("fd rejects a cfl violating grid") {
  ProblemSpec k = make_problem("kpz");
  FDGrid1D fd;
  fd.nt = 10;
  CHECK_THROWS_AS(fd_hjb_1d(k, fd), ConfigError);
  fd.nt = fd_required_steps(k, fd, fd.a_max);
  fd.saturate = false;
  CHECK_NOTHROW(fd_hjb_1d(k, fd));
}

TEST_CASE("fd csv export") {
  ProblemSpec k = make_problem("kpz");
  FDGrid1D fd;
  fd.nx = 20;
  fd.store_slices = 3;
  std::string csv = fd_hjb_1d(k, fd).to_csv();
  CHECK(csv.rfind("t,x,u\n", 0) == 0);
}
