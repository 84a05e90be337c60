#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "parallel.hpp"
#include "quadrature.hpp"

namespace vhj {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double cole_hopf_kpz(double lambda, const std::function<double(const double*)>& g, int dim, double t, double T,
                     const std::vector<double>& x, int quad_points) {
  if (!(lambda > 0)) throw ConfigError("cole_hopf_kpz: lambda must be positive");
  if (dim < 1 || static_cast<int>(x.size()) != dim) throw ConfigError("cole_hopf_kpz: point dimension mismatch");
  if (t > T || t < 0) throw ConfigError("cole_hopf_kpz: t outside [0, T]");
  if (t == T) return g(x.data());
  int m = quad_points;
  if (dim > 1) m = std::max(4, std::min(quad_points, static_cast<int>(std::floor(std::pow(2e5, 1.0 / dim)))));
  std::vector<double> z, w;
  gauss_hermite(m, z, w);
  const double s = std::sqrt(T - t);
  std::vector<int> idx(dim, 0);
  std::vector<double> y(dim);
  double sum = 0;
  while (true) {
    double wt = 1;
    for (int j = 0; j < dim; ++j) {
      y[j] = x[j] + s * z[idx[j]];
      wt *= w[idx[j]];
    }
    sum += wt * std::exp(-2.0 * lambda * g(y.data()));
    int j = 0;
    while (j < dim && ++idx[j] == m) idx[j++] = 0;
    if (j == dim) break;
  }
  if (!(sum > 0) || !std::isfinite(sum)) {
    std::ostringstream os;
    os << "cole_hopf_kpz: quadrature " << (sum > 0 ? "overflow" : "underflow") << " of exp(-2 lambda g); rescale g or lambda";
    throw NumericalError(os.str());
  }
  return -std::log(sum) / (2.0 * lambda);
}

namespace {

MatrixXd matrix_from(const json& j, int d) {
  MatrixXd M(d, d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) M(i, k) = j.at(i).at(k).get<double>();
  return M;
}

}  // namespace

LQMatrices LQMatrices::from_params(const json& p) {
  LQMatrices m;
  int d = p.at("dim").get<int>();
  m.A = matrix_from(p.at("A"), d);
  m.B = matrix_from(p.at("B"), d);
  m.C = matrix_from(p.at("C"), d);
  m.D = matrix_from(p.at("D"), d);
  m.Q = matrix_from(p.at("Q"), d);
  m.S = matrix_from(p.at("S"), d);
  m.R = p.at("R").get<double>();
  m.T = p.at("T").get<double>();
  return m;
}

double RiccatiSolution::value(double t, const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != dim) throw ConfigError("riccati: point dimension mismatch");
  if (t < 0 || t > T) throw ConfigError("riccati: t outside [0, T]");
  double h = T / steps, u = t / h;
  int k = std::min(static_cast<int>(u), steps - 1);
  double th = u - k;
  Eigen::Map<const VectorXd> v(x.data(), dim);
  double v0 = v.dot(P[k] * v) + q[k].dot(v) + r[k];
  double v1 = v.dot(P[k + 1] * v) + q[k + 1].dot(v) + r[k + 1];
  return (1 - th) * v0 + th * v1;
}

RiccatiSolution riccati_lq(const LQMatrices& m, int ode_steps) {
  const int d = static_cast<int>(m.A.rows());
  if (!(m.R > 0)) throw ConfigError("riccati: R must be positive");
  if ((m.S - m.S.transpose()).norm() > 1e-12 * (1 + m.S.norm())) throw ConfigError("riccati: S must be symmetric");
  if (ode_steps < 1) throw ConfigError("riccati: ode_steps must be positive");
  const MatrixXd BB = m.B * m.B.transpose();
  const MatrixXd Qs = 0.5 * (m.Q + m.Q.transpose());
  struct St {
    MatrixXd P;
    VectorXd q;
    double r;
  };
  // derivatives in t
  auto rhs = [&](const St& s) {
    St o;
    MatrixXd PB = s.P * m.B;
    VectorXd dg = s.P.diagonal();
    o.P = -(m.A.transpose() * s.P + s.P * m.A) - m.C.transpose() * dg.asDiagonal() * m.C - Qs +
          (1.0 / m.R) * PB * PB.transpose();
    VectorXd dv = (s.P * m.D).diagonal();
    o.q = -2.0 * m.C.transpose() * dv - m.A.transpose() * s.q + (1.0 / m.R) * s.P * BB * s.q;
    o.r = -(m.D.transpose() * s.P * m.D).trace() + 0.25 / m.R * s.q.dot(BB * s.q);
    return o;
  };
  auto axpy = [](const St& a, double h, const St& b) { return St{a.P + h * b.P, a.q + h * b.q, a.r + h * b.r}; };
  RiccatiSolution sol;
  sol.dim = d;
  sol.T = m.T;
  sol.steps = ode_steps;
  sol.P.resize(ode_steps + 1);
  sol.q.resize(ode_steps + 1);
  sol.r.resize(ode_steps + 1);
  St s{m.S, VectorXd::Zero(d), 0.0};
  const double h = -m.T / ode_steps;
  sol.P[ode_steps] = s.P;
  sol.q[ode_steps] = s.q;
  sol.r[ode_steps] = s.r;
  for (int k = ode_steps; k > 0; --k) {
    St k1 = rhs(s), k2 = rhs(axpy(s, 0.5 * h, k1)), k3 = rhs(axpy(s, 0.5 * h, k2)), k4 = rhs(axpy(s, h, k3));
    s.P += h / 6.0 * (k1.P + 2 * k2.P + 2 * k3.P + k4.P);
    s.q += h / 6.0 * (k1.q + 2 * k2.q + 2 * k3.q + k4.q);
    s.r += h / 6.0 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r);
    double big = std::max(s.P.cwiseAbs().maxCoeff(), std::abs(s.r));
    if (!std::isfinite(big) || big > 1e12) {
      std::ostringstream os;
      os << "riccati: finite escape near t = " << (k - 1) * m.T / ode_steps << " (|P| = " << big
         << "); the value function blows up before t = 0";
      throw NumericalError(os.str());
    }
    sol.max_asymmetry = std::max(sol.max_asymmetry, (s.P - s.P.transpose()).cwiseAbs().maxCoeff());
    sol.P[k - 1] = s.P;
    sol.q[k - 1] = s.q;
    sol.r[k - 1] = s.r;
  }
  return sol;
}

// ------------------------------------------------------------------ FD

namespace {

struct FDDomain {
  int n = 0, off = 0, nwin = 0;
  double lo = 0, dx = 0;
  std::vector<double> xs, s2, bx, rx;
};

FDDomain make_domain(const ProblemSpec& spec, const FDGrid1D& fd) {
  FDDomain D;
  D.dx = (fd.x_max - fd.x_min) / fd.nx;
  double pad = fd.pad;
  if (pad < 0) {
    double smax = 0, bmax = 0;
    for (int j = 0; j <= 20; ++j) {
      double x = fd.x_min + (fd.x_max - fd.x_min) * j / 20.0, s, b;
      spec.sigma(&x, &s);
      spec.b(&x, &b);
      smax = std::max(smax, std::abs(s));
      bmax = std::max(bmax, std::abs(b));
    }
    pad = 5.0 * smax * std::sqrt(spec.T) + bmax * spec.T;
  }
  D.off = static_cast<int>(std::ceil(pad / D.dx)) + 1;
  D.nwin = fd.nx + 1;
  D.n = D.nwin + 2 * D.off;
  D.lo = fd.x_min - D.off * D.dx;
  D.xs.resize(D.n);
  D.s2.resize(D.n);
  D.bx.resize(D.n);
  D.rx.resize(D.n);
  for (int i = 0; i < D.n; ++i) {
    double x = D.lo + i * D.dx, s;
    D.xs[i] = x;
    spec.sigma(&x, &s);
    spec.b(&x, &D.bx[i]);
    spec.rho(&x, &D.rx[i]);
    D.s2[i] = s * s;
  }
  return D;
}

struct FDRun {
  std::vector<double> u0;  // full domain at t = 0
  std::vector<double> t, slices;
  long central = 0, total = 0;
};

FDRun fd_solve(const ProblemSpec& spec, const FDDomain& D, const FDGrid1D& fd, double a_max, int nt, bool store) {
  auto f = make_generator(spec);
  const int n = D.n;
  const double dx = D.dx, dt = spec.T / nt;
  std::vector<double> u(n), un(n);
  for (int i = 0; i < n; ++i) u[i] = spec.g(&D.xs[i]);
  FDRun R;
  int stride = std::max(1, nt / std::max(1, fd.store_slices - 1));
  auto keep = [&](int k) {
    if (!store) return;
    R.t.push_back(k * dt);
    R.slices.insert(R.slices.end(), u.begin() + D.off, u.begin() + D.off + D.nwin);
  };
  keep(nt);
  std::vector<long> cen(chunk_count(n), 0), tot(chunk_count(n), 0);
  for (int k = nt - 1; k >= 0; --k) {
    parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
      for (std::size_t i = std::max<std::size_t>(lo, 1); i < std::min<std::size_t>(hi, n - 1); ++i) {
        const double x = D.xs[i], ui = u[i];
        const double pc = (u[i + 1] - u[i - 1]) / (2 * dx), pf = (u[i + 1] - ui) / dx, pb = (ui - u[i - 1]) / dx;
        const double d2 = (u[i + 1] - 2 * ui + u[i - 1]) / (dx * dx);
        auto ham = [&](double a) {
          double v = D.bx[i] + D.rx[i] * a;
          double p = std::abs(v) * dx <= D.s2[i] ? pc : (v > 0 ? pf : pb);
          return v * p + f(&x, &a, ui);
        };
        double best = ham(0.0), abest = 0.0;
        const double h = 2 * a_max / (fd.na - 1);
        for (int j = 0; j < fd.na; ++j) {
          double a = -a_max + h * j, v = ham(a);
          if (v < best) {
            best = v;
            abest = a;
          }
        }
        std::uintmax_t it = 60;
        auto r = boost::math::tools::brent_find_minima(ham, std::max(-a_max, abest - h), std::min(a_max, abest + h),
                                                       40, it);
        if (r.second < best) {
          best = r.second;
          abest = r.first;
        }
        double v = D.bx[i] + D.rx[i] * abest;
        if (std::abs(v) * dx <= D.s2[i]) ++cen[c];
        ++tot[c];
        un[i] = ui + dt * (0.5 * D.s2[i] * d2 + best);
      }
    });
    un[0] = 2 * un[1] - un[2];
    un[n - 1] = 2 * un[n - 2] - un[n - 3];
    std::swap(u, un);
    if (k % stride == 0) keep(k);
  }
  for (long v : cen) R.central += v;
  for (long v : tot) R.total += v;
  R.u0 = u;
  return R;
}

}  // namespace

int fd_required_steps(const ProblemSpec& spec, const FDGrid1D& fd, double a_max) {
  FDDomain D = make_domain(spec, fd);
  double s2 = 0, v = 0;
  for (int i = 0; i < D.n; ++i) {
    s2 = std::max(s2, D.s2[i]);
    v = std::max(v, std::abs(D.bx[i]) + std::abs(D.rx[i]) * a_max);
  }
  return static_cast<int>(std::ceil(2.0 * spec.T * (s2 / (D.dx * D.dx) + v / D.dx) - 1e-9));
}

FDResult fd_hjb_1d(const ProblemSpec& spec, const FDGrid1D& fd) {
  if (spec.dim != 1) throw ConfigError("fd_hjb_1d needs a one-dimensional problem");
  if (!(fd.x_max > fd.x_min) || fd.nx < 4) throw ConfigError("fd grid: need x_max > x_min and nx >= 4");
  if (!(fd.a_max > 0) || fd.na < 3) throw ConfigError("fd grid: need a_max > 0 and na >= 3");
  FDDomain D = make_domain(spec, fd);
  double a_max = fd.a_max;
  int need = fd_required_steps(spec, fd, a_max);
  if (fd.nt > 0 && fd.nt < need) {
    std::ostringstream os;
    os << "fd grid violates CFL: nt = " << fd.nt << ", use nt >= " << need;
    throw ConfigError(os.str());
  }
  FDResult res;
  if (fd.saturate) {
    for (int dbl = 0; dbl <= fd.max_doublings; ++dbl) {
      int nt_c = std::max(fd.nt > 0 ? fd.nt : fd_required_steps(spec, fd, a_max), fd_required_steps(spec, fd, 2 * a_max));
      FDRun r1 = fd_solve(spec, D, fd, a_max, nt_c, false), r2 = fd_solve(spec, D, fd, 2 * a_max, nt_c, false);
      double delta = 0;
      for (int i = 0; i < D.nwin; ++i) delta = std::max(delta, std::abs(r1.u0[D.off + i] - r2.u0[D.off + i]));
      res.saturation_delta = delta;
      if (delta < 1e-6) {
        res.saturated = true;
        break;
      }
      if (dbl < fd.max_doublings) a_max *= 2;
    }
  }
  int nt = fd.nt > 0 ? std::max(fd.nt, fd_required_steps(spec, fd, a_max)) : fd_required_steps(spec, fd, a_max);
  FDRun r = fd_solve(spec, D, fd, a_max, nt, true);
  res.nt = nt;
  res.dx = D.dx;
  res.dt = spec.T / nt;
  res.a_max = a_max;
  res.central_fraction_pct = r.total ? static_cast<int>(100.0 * r.central / r.total) : 100;
  res.x.resize(D.nwin);
  for (int i = 0; i < D.nwin; ++i) res.x[i] = D.xs[D.off + i];
  res.u0.assign(r.u0.begin() + D.off, r.u0.begin() + D.off + D.nwin);
  // slices were stored from t = T backwards
  const std::size_t S = r.t.size();
  for (std::size_t s = 0; s < S; ++s) {
    std::size_t src = S - 1 - s;
    res.t.push_back(r.t[src]);
    res.u.insert(res.u.end(), r.slices.begin() + src * D.nwin, r.slices.begin() + (src + 1) * D.nwin);
  }
  return res;
}

double FDResult::value(double xq) const {
  if (xq < x.front() || xq > x.back()) throw ConfigError("fd value requested outside the reporting window");
  double u = (xq - x.front()) / dx;
  std::size_t i = std::min(static_cast<std::size_t>(u), x.size() - 2);
  double th = u - i;
  return (1 - th) * u0[i] + th * u0[i + 1];
}

std::string FDResult::to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "t,x,u\n";
  for (std::size_t s = 0; s < t.size(); ++s)
    for (std::size_t i = 0; i < x.size(); ++i) os << t[s] << ',' << x[i] << ',' << u[s * x.size() + i] << '\n';
  return os.str();
}

}  // namespace vhj
