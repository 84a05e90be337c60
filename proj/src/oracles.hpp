#pragma once
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "problem.hpp"

namespace vhj {

// u(t, x) = -(1/2 lambda) log E[exp(-2 lambda g(x + W_{T-t}))] for the quadratic
// KPZ equation with unit diffusion. Tensor Gauss-Hermite rule; for d > 1 the
// per-axis order drops so the node count stays near 2e5.
double cole_hopf_kpz(double lambda, const std::function<double(const double*)>& g, int dim, double t, double T,
                     const std::vector<double>& x, int quad_points = 64);

struct LQMatrices {
  Eigen::MatrixXd A, B, C, D, Q, S;
  double R = 1.0;
  double T = 1.0;
  static LQMatrices from_params(const json& params);
};

struct RiccatiSolution {
  int dim = 1;
  double T = 1.0;
  int steps = 0;
  std::vector<Eigen::MatrixXd> P;  // node k at t = k * T / steps
  std::vector<Eigen::VectorXd> q;
  std::vector<double> r;
  double max_asymmetry = 0;

  // x' P(t) x + q(t)' x + r(t), linear in t between nodes
  double value(double t, const std::vector<double>& x) const;
};

// Backward RK4 for the quadratic ansatz u = x'Px + q'x + r with sigma(x) = diag(Cx) + D.
RiccatiSolution riccati_lq(const LQMatrices& m, int ode_steps = 10000);

// Explicit scheme for -u_t - 1/2 sigma^2 u_xx - inf_a [(b + rho a) u_x + f(x, a, u)] = 0.
// nx counts intervals on the reporting window; the computational domain adds pad on
// both sides with linear extrapolation at the outer nodes.
struct FDGrid1D {
  double x_min = -3.0, x_max = 3.0;
  int nx = 120;
  double a_max = 10.0;
  int na = 41;
  int nt = 0;        // 0 picks the smallest CFL-admissible count
  double pad = -1;   // < 0 picks 5 sigma sqrt(T) + max|b| T
  bool saturate = true;
  int max_doublings = 6;
  int store_slices = 51;  // time slices kept for export
};

struct FDResult {
  std::vector<double> x;  // reporting window nodes
  std::vector<double> t;  // stored slices
  std::vector<double> u;  // [slice][node]
  std::vector<double> u0; // t = 0 on the window
  int nt = 0;
  double dx = 0, dt = 0;
  double a_max = 0;
  bool saturated = false;
  double saturation_delta = 0;
  int central_fraction_pct = 0;

  double value(double x) const;  // linear interpolation at t = 0
  std::string to_csv() const;
};

int fd_required_steps(const ProblemSpec& spec, const FDGrid1D& fd, double a_max);
FDResult fd_hjb_1d(const ProblemSpec& spec, const FDGrid1D& fd);

}  // namespace vhj
