#include "bsde.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "parallel.hpp"
#include "quadrature.hpp"
#include "spline.hpp"

namespace vhj {

using Eigen::MatrixXd;
using Eigen::VectorXd;

static const char* kind_name(BasisKind k) {
  switch (k) {
    case BasisKind::Spline: return "spline";
    case BasisKind::Polynomial: return "polynomial";
    case BasisKind::Cells: return "cells";
  }
  return "?";
}

json RegressionConfig::to_json() const {
  return {{"basis", kind_name(kind)}, {"spline_x", spline_x},     {"spline_i", spline_i},
          {"smoothing", smoothing},   {"quad_x", quad_x},         {"quad_i", quad_i},
          {"degree", degree},         {"resolution", resolution}, {"ridge", ridge},
          {"clip", clip},             {"picard_iters", picard_iters}, {"shift_grid", shift_grid}};
}

RegressionConfig RegressionConfig::from_json(const json& j) {
  RegressionConfig r;
  if (j.is_null()) return r;
  if (j.contains("basis")) {
    std::string b = j.at("basis").get<std::string>();
    if (b == "spline") r.kind = BasisKind::Spline;
    else if (b == "polynomial") r.kind = BasisKind::Polynomial;
    else if (b == "cells") r.kind = BasisKind::Cells;
    else throw ConfigError("regression.basis must be spline, polynomial or cells");
  }
  auto gi = [&](const char* k, int& v) {
    if (j.contains(k)) v = j.at(k).get<int>();
  };
  auto gd = [&](const char* k, double& v) {
    if (j.contains(k)) v = j.at(k).get<double>();
  };
  gi("spline_x", r.spline_x); gi("spline_i", r.spline_i); gd("smoothing", r.smoothing);
  gi("quad_x", r.quad_x); gi("quad_i", r.quad_i); gi("degree", r.degree); gi("resolution", r.resolution);
  gd("ridge", r.ridge); gd("clip", r.clip); gi("picard_iters", r.picard_iters); gi("shift_grid", r.shift_grid);
  if (r.degree < 1) throw ConfigError("regression.degree must be at least 1");
  if (r.resolution < 2) throw ConfigError("regression.resolution must be at least 2");
  if (r.spline_x < 1 || r.spline_i < 1) throw ConfigError("spline interval counts must be positive");
  if (!std::isfinite(r.ridge) || r.ridge < 0) throw ConfigError("regression.ridge must be finite and nonnegative");
  if (r.picard_iters < 1) throw ConfigError("regression.picard_iters must be at least 1");
  if (r.shift_grid < 3) throw ConfigError("regression.shift_grid must be at least 3");
  if (r.quad_x < 1 || r.quad_i < 1) throw ConfigError("quadrature orders must be positive");
  if (!(r.clip >= 0 && r.clip < 0.5)) throw ConfigError("regression.clip must lie in [0, 0.5)");
  return r;
}

namespace {

struct ShiftMin {
  double value;
  double s;
};

// Minimize phi(s) on [L, H] with L <= 0 <= H. s = 0 wins ties.
template <class Phi>
ShiftMin min_shift_1d(Phi&& phi, double L, double H, int grid) {
  ShiftMin best{phi(0.0), 0.0};
  if (!(H - L > 0)) return best;
  double h = (H - L) / (grid - 1);
  for (int g = 0; g < grid; ++g) {
    double s = L + h * g;
    double v = phi(s);
    if (v < best.value) best = {v, s};
  }
  double lo = std::max(L, best.s - h), hi = std::min(H, best.s + h);
  std::uintmax_t iters = 60;
  auto r = boost::math::tools::brent_find_minima(phi, lo, hi, 30, iters);
  double s = r.first, v = r.second;
  if (v < best.value) best = {v, s};
  return best;
}

// Minimize over the ball |s| <= rad in d dimensions: axis probes, then
// normalized descent with step halving.
template <class Phi>
double min_shift_ball(Phi&& phi, int d, double rad, std::vector<double>& s_best) {
  std::vector<double> s(d, 0.0), t(d);
  s_best.assign(d, 0.0);
  double best = phi(s);
  if (!(rad > 0)) return best;
  for (int j = 0; j < d; ++j)
    for (double m : {-1.0, -0.5, 0.5, 1.0}) {
      std::fill(t.begin(), t.end(), 0.0);
      t[j] = m * rad;
      double v = phi(t);
      if (v < best) {
        best = v;
        s_best = t;
      }
    }
  double step = 0.25 * rad, h = 1e-5 * rad;
  std::vector<double> gr(d);
  for (int it = 0; it < 40 && step > 1e-9 * rad; ++it) {
    double gn = 0;
    for (int j = 0; j < d; ++j) {
      t = s_best;
      t[j] += h;
      double vp = phi(t);
      t[j] -= 2 * h;
      double vm = phi(t);
      gr[j] = (vp - vm) / (2 * h);
      gn += gr[j] * gr[j];
    }
    gn = std::sqrt(gn);
    if (gn == 0) break;
    for (int j = 0; j < d; ++j) t[j] = s_best[j] - step * gr[j] / gn;
    double nt = 0;
    for (double v : t) nt += v * v;
    nt = std::sqrt(nt);
    if (nt > rad)
      for (double& v : t) v *= rad / nt;
    double v = phi(t);
    if (v < best) {
      best = v;
      s_best = t;
    } else {
      step *= 0.5;
    }
  }
  return best;
}

// Regression of a per-path quantity on features of (X_k, I_k).
struct NowModel {
  BasisKind kind = BasisKind::Polynomial;
  int m = 2;  // number of variables, 2*dim
  std::vector<double> mu, sd, lo, hi;
  std::vector<std::vector<int>> expo;
  int res = 2;
  int P = 0;
  Eigen::LDLT<MatrixXd> fac;

  void standardize(const double* v, double* z) const {
    for (int j = 0; j < m; ++j) z[j] = (v[j] - mu[j]) / sd[j];
  }

  void features(const double* v, double* out) const {
    double z[32];
    standardize(v, z);
    for (int b = 0; b < P; ++b) {
      double t = 1;
      for (int j = 0; j < m; ++j)
        for (int e = 0; e < expo[b][j]; ++e) t *= z[j];
      out[b] = t;
    }
  }

  int cell(const double* v) const {
    int c = 0;
    for (int j = 0; j < m; ++j) {
      double u = (v[j] - lo[j]) / (hi[j] - lo[j]) * res;
      int ix = std::min(std::max(static_cast<int>(std::floor(u)), 0), res - 1);
      c = c * res + ix;
    }
    return c;
  }

  void build(const std::vector<double>& pts, std::size_t N, const std::vector<char>& mask, const RegressionConfig& cfg,
             std::vector<std::string>& warnings, int k) {
    kind = cfg.kind;
    mu.assign(m, 0.0);
    sd.assign(m, 1.0);
    lo.assign(m, 0.0);
    hi.assign(m, 1.0);
    double cnt = 0;
    for (std::size_t p = 0; p < N; ++p)
      if (mask[p]) {
        cnt += 1;
        for (int j = 0; j < m; ++j) mu[j] += pts[p * m + j];
      }
    for (int j = 0; j < m; ++j) mu[j] /= cnt;
    std::vector<double> var(m, 0.0);
    for (std::size_t p = 0; p < N; ++p)
      if (mask[p])
        for (int j = 0; j < m; ++j) var[j] += (pts[p * m + j] - mu[j]) * (pts[p * m + j] - mu[j]);
    for (int j = 0; j < m; ++j) {
      sd[j] = std::sqrt(var[j] / cnt);
      if (!(sd[j] > 1e-12)) sd[j] = 1.0;
      std::vector<double> col;
      col.reserve(N);
      for (std::size_t p = 0; p < N; ++p)
        if (mask[p]) col.push_back(pts[p * m + j]);
      quantile_range(col, cfg.clip, lo[j], hi[j]);
    }
    if (kind == BasisKind::Cells) {
      res = cfg.resolution;
      P = 1;
      for (int j = 0; j < m; ++j) P *= res;
      return;
    }
    expo.clear();
    std::vector<int> e(m, 0);
    std::function<void(int, int)> rec = [&](int j, int left) {
      if (j == m) {
        expo.push_back(e);
        return;
      }
      for (int t = 0; t <= left; ++t) {
        e[j] = t;
        rec(j + 1, left - t);
      }
      e[j] = 0;
    };
    rec(0, cfg.degree);
    std::sort(expo.begin(), expo.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
      int sa = 0, sb = 0;
      for (int v : a) sa += v;
      for (int v : b) sb += v;
      return sa != sb ? sa < sb : a > b;
    });
    P = static_cast<int>(expo.size());
    std::size_t nc = chunk_count(N);
    std::vector<MatrixXd> part(nc);
    parallel_chunks(N, [&](std::size_t c, std::size_t a, std::size_t b) {
      MatrixXd A = MatrixXd::Zero(P, P);
      std::vector<double> phi(P);
      for (std::size_t p = a; p < b; ++p) {
        if (!mask[p]) continue;
        features(&pts[p * m], phi.data());
        for (int r = 0; r < P; ++r)
          for (int s = 0; s < P; ++s) A(r, s) += phi[r] * phi[s];
      }
      part[c] = std::move(A);
    });
    MatrixXd A = MatrixXd::Zero(P, P);
    for (auto& x : part) A += x;
    double tr = A.trace() / P;
    MatrixXd Ar = A;
    Ar.diagonal().array() += cfg.ridge * tr;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Ar, Eigen::EigenvaluesOnly);
    double cond = es.eigenvalues().maxCoeff() / std::max(es.eigenvalues().minCoeff(), 1e-300);
    if (!(cond < 1e12)) {
      std::ostringstream os;
      os << "step " << k << ": regression condition number " << cond << ", ridge raised to 1e-6";
      warnings.push_back(os.str());
      Ar = A;
      Ar.diagonal().array() += 1e-6 * tr;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es2(Ar, Eigen::EigenvaluesOnly);
      cond = es2.eigenvalues().maxCoeff() / std::max(es2.eigenvalues().minCoeff(), 1e-300);
      if (!(cond < 1e14)) {
        std::ostringstream o2;
        o2 << "regression ill-conditioned at step " << k << " (condition number " << cond << ")";
        throw NumericalError(o2.str());
      }
    }
    fac.compute(Ar);
  }

  VectorXd fit(const std::vector<double>& pts, const std::vector<double>& v, const std::vector<char>& mask) const {
    const std::size_t N = v.size();
    if (kind == BasisKind::Cells) {
      std::vector<double> sum(P, 0.0), cnt(P, 0.0);
      double tot = 0, tc = 0;
      for (std::size_t p = 0; p < N; ++p) {
        if (!mask[p]) continue;
        int c = cell(&pts[p * m]);
        sum[c] += v[p];
        cnt[c] += 1;
        tot += v[p];
        tc += 1;
      }
      VectorXd out(P);
      for (int c = 0; c < P; ++c) out[c] = cnt[c] > 0 ? sum[c] / cnt[c] : tot / tc;
      return out;
    }
    std::size_t nc = chunk_count(N);
    std::vector<VectorXd> part(nc);
    parallel_chunks(N, [&](std::size_t c, std::size_t a, std::size_t b) {
      VectorXd r = VectorXd::Zero(P);
      std::vector<double> phi(P);
      for (std::size_t p = a; p < b; ++p) {
        if (!mask[p]) continue;
        features(&pts[p * m], phi.data());
        for (int s = 0; s < P; ++s) r[s] += phi[s] * v[p];
      }
      part[c] = std::move(r);
    });
    VectorXd rhs = VectorXd::Zero(P);
    for (auto& r : part) rhs += r;
    return fac.solve(rhs);
  }

  double eval(const VectorXd& c, const double* v) const {
    if (kind == BasisKind::Cells) return c[cell(v)];
    double phi[512];
    features(v, phi);
    double s = 0;
    for (int b = 0; b < P; ++b) s += c[b] * phi[b];
    return s;
  }
};

}  // namespace

struct PenalizedSolver::Impl {
  const ProblemSpec& spec;
  const PathBundle& B;
  RegressionConfig reg;
  std::function<double(const double*, const double*, double)> f;
  int d = 1, K = 0;
  long N = 0;
  double dt = 0, sq = 0;
  std::vector<char> mask;
  bool spline = true;
  std::vector<TensorSpline> sp;
  std::vector<double> zx, wx, zi, wi;
  std::vector<NowModel> now;
  std::vector<std::string> warnings;

  Impl(const ProblemSpec& s, const PathBundle& b, const RegressionConfig& r) : spec(s), B(b), reg(r) {}

  void gather(int k, std::vector<double>& xs, std::vector<double>& is) const {
    xs.resize(N);
    is.resize(N);
    for (long p = 0; p < N; ++p) {
      xs[p] = B.X[B.node(p, k)];
      is[p] = B.I[B.node(p, k)];
    }
  }
  void gather_pts(int k, std::vector<double>& pts) const {
    pts.resize(static_cast<std::size_t>(N) * 2 * d);
    for (long p = 0; p < N; ++p)
      for (int j = 0; j < d; ++j) {
        pts[p * 2 * d + j] = B.X[B.node(p, k) + j];
        pts[p * 2 * d + d + j] = B.I[B.node(p, k) + j];
      }
  }

  // E[psi(X_{k+1}, I_{k+1}) | X_k = x, I_k = i] and E[psi * dW] / dt for the
  // fitted spline psi of the next step, by tensor Gauss-Hermite quadrature.
  void cond_expect(const TensorSpline& s1, const VectorXd& c1, double x, double i, double& C, double& Z,
                   double* qx, double* qz, double* tmp) const {
    double bx, sx, rx;
    spec.b(&x, &bx);
    spec.sigma(&x, &sx);
    spec.rho(&x, &rx);
    const int ni = s1.ai.size();
    double mean = x + (bx + rx * i) * dt;
    std::fill(qx, qx + ni, 0.0);
    std::fill(qz, qz + ni, 0.0);
    for (std::size_t a = 0; a < zx.size(); ++a) {
      s1.row(c1, mean + sx * sq * zx[a], tmp);
      for (int j = 0; j < ni; ++j) {
        qx[j] += wx[a] * tmp[j];
        qz[j] += wx[a] * zx[a] * tmp[j];
      }
    }
    C = 0;
    Z = 0;
    for (std::size_t b = 0; b < zi.size(); ++b) {
      double ib = i + sq * zi[b];
      C += wi[b] * s1.eval_row(qx, ib);
      Z += wi[b] * s1.eval_row(qz, ib);
    }
    Z /= sq;
  }
};

PenalizedSolver::PenalizedSolver(const ProblemSpec& spec, const PathBundle& bundle, const RegressionConfig& reg)
    : impl_(std::make_unique<Impl>(spec, bundle, reg)), reg_(reg) {
  Impl& m = *impl_;
  m.d = bundle.dim;
  m.K = bundle.steps;
  m.N = bundle.n_paths;
  m.dt = bundle.grid.dt();
  m.sq = std::sqrt(m.dt);
  if (m.d != spec.dim) throw ConfigError("bundle dimension does not match problem");
  m.f = make_generator(spec);
  if (m.dt * spec.growth.L_F >= 1.0 && reg.picard_iters <= 1)
    throw ConfigError("dt * L_F must be below 1 for a single Picard sweep");
  m.mask.assign(m.N, 1);
  for (long p = 0; p < m.N; ++p)
    if (!bundle.blown.empty() && bundle.blown[p]) m.mask[p] = 0;
  if (bundle.n_blown > 0)
    m.warnings.push_back(std::to_string(bundle.n_blown) + " blown-up paths excluded from regression");
  m.spline = reg.kind == BasisKind::Spline;
  if (m.spline && m.d != 1) {
    m.spline = false;
    reg_.kind = BasisKind::Polynomial;
    m.reg.kind = BasisKind::Polynomial;
    m.warnings.push_back("spline basis needs dim 1; using polynomial basis");
  }
  if (m.spline) {
    gauss_hermite(reg.quad_x, m.zx, m.wx);
    gauss_hermite(reg.quad_i, m.zi, m.wi);
    m.sp.resize(m.K + 1);
    std::vector<double> xs, is;
    for (int k = 1; k <= m.K; ++k) {
      m.gather(k, xs, is);
      std::vector<double> mx, mi;
      mx.reserve(m.N);
      mi.reserve(m.N);
      for (long p = 0; p < m.N; ++p)
        if (m.mask[p]) {
          mx.push_back(xs[p]);
          mi.push_back(is[p]);
        }
      auto& s = m.sp[k];
      s.ax.M = reg.spline_x;
      s.ai.M = reg.spline_i;
      quantile_range(mx, reg.clip, s.ax.lo, s.ax.hi);
      quantile_range(mi, reg.clip, s.ai.lo, s.ai.hi);
      s.build(xs, is, &m.mask, reg.smoothing);
    }
  } else {
    m.now.resize(m.K + 1);
    std::vector<double> pts;
    for (int k = 1; k < std::max(m.K, 2); ++k) {
      if (k > m.K) break;
      m.gather_pts(k, pts);
      m.now[k].m = 2 * m.d;
      m.now[k].build(pts, m.N, m.mask, m.reg, m.warnings, k);
    }
  }
}

PenalizedSolver::~PenalizedSolver() = default;

const std::vector<std::string>& PenalizedSolver::warnings() const { return impl_->warnings; }

BackwardSolution PenalizedSolver::solve(double n) const {
  const Impl& m = *impl_;
  if (!(n >= 0)) throw ConfigError("penalization level must be nonnegative");
  const int d = m.d, K = m.K;
  const long N = m.N;
  const double dt = m.dt, rad = n * dt;
  const int sweeps = m.spec.growth.L_F == 0.0 ? 1 : m.reg.picard_iters;
  BackwardSolution S;
  S.n = n;
  S.n_paths = N;
  S.steps = K;
  S.dim = d;
  S.warnings = m.warnings;
  S.Y.assign(static_cast<std::size_t>(N) * (K + 1), 0.0);
  S.Z.assign(static_cast<std::size_t>(N) * K * d, 0.0);
  S.V.assign(static_cast<std::size_t>(N) * K * d, 0.0);
  S.tilt.assign(static_cast<std::size_t>(N) * K * d, 0.0);
  S.dK.assign(static_cast<std::size_t>(N) * K, 0.0);
  std::vector<double> acc(N, 0.0);  // sum of f dt - dK along the path
  std::vector<double> resid(chunk_count(N), 0.0);
  auto Yat = [&](long p, int k) -> double& { return S.Y[static_cast<std::size_t>(p) * (K + 1) + k]; };
  auto inc = [&](long p, int k) { return static_cast<std::size_t>(p) * K + k; };

  for (long p = 0; p < N; ++p) Yat(p, K) = m.spec.g(m.B.x(p, K));

  std::vector<double> xs, is, yv, T, pts, pts1;
  for (int k = K - 1; k >= 0; --k) {
    yv.resize(N);
    for (long p = 0; p < N; ++p) yv[p] = Yat(p, k + 1);

    if (m.spline) {
      const TensorSpline& s1 = m.sp[k + 1];
      m.gather(k + 1, xs, is);
      VectorXd c1 = s1.fit(xs, is, yv, &m.mask);
      const int ni1 = s1.ai.size();
      if (k == 0) {
        const double x0 = m.B.x0[0], a0 = m.B.a0[0];
        std::vector<double> qx(ni1), qz(ni1), tmp(ni1);
        double C0, Z0;
        m.cond_expect(s1, c1, x0, a0, C0, Z0, qx.data(), qz.data(), tmp.data());
        double L = std::max(std::min(s1.ai.lo, a0) - a0, -rad), H = std::min(std::max(s1.ai.hi, a0) - a0, rad);
        double ybar = C0, y = C0, s_opt = 0, fval = 0, r0 = 0;
        for (int sw = 0; sw < sweeps; ++sw) {
          auto phi = [&](double s) {
            double C, Z, ia = a0 + s;
            m.cond_expect(s1, c1, x0, ia, C, Z, qx.data(), qz.data(), tmp.data());
            return C + m.f(&x0, &ia, ybar) * dt;
          };
          ShiftMin best = min_shift_1d(phi, L, H, 4 * m.reg.shift_grid);
          r0 = std::abs(best.value - y);
          y = best.value;
          s_opt = best.s;
          fval = m.f(&x0, &a0, ybar);
          ybar = y;
        }
        double dk = std::max(0.0, C0 + fval * dt - y);
        for (long p = 0; p < N; ++p) {
          Yat(p, 0) = y;
          S.dK[inc(p, 0)] = dk;
          S.Z[inc(p, 0)] = Z0;
          S.tilt[inc(p, 0)] = dt > 0 ? s_opt / dt : 0;
          S.V[inc(p, 0)] = (n > 0 && s_opt != 0) ? -dk / (n * dt) * (s_opt > 0 ? 1.0 : -1.0) : 0.0;
          acc[p] += fval * dt - dk;
        }
        resid[0] = std::max(resid[0], sweeps > 1 ? r0 : 0.0);
        continue;
      }
      const TensorSpline& s0 = m.sp[k];
      m.gather(k, xs, is);
      T.assign(N, 0.0);
      std::vector<double> Zp(N, 0.0);
      parallel_chunks(N, [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> qx(ni1), qz(ni1), tmp(ni1);
        for (std::size_t p = lo; p < hi; ++p) m.cond_expect(s1, c1, xs[p], is[p], T[p], Zp[p], qx.data(), qz.data(), tmp.data());
      });
      VectorXd cC = s0.fit(xs, is, T, &m.mask);
      const int ni0 = s0.ai.size();
      parallel_chunks(N, [&](std::size_t c, std::size_t lo, std::size_t hi) {
        std::vector<double> q(ni0);
        for (std::size_t p = lo; p < hi; ++p) {
          double x = xs[p], i0 = is[p];
          s0.row(cC, x, q.data());
          double C0 = s0.eval_row(q.data(), i0);
          double L = std::max(std::min(s0.ai.lo, i0) - i0, -rad), H = std::min(std::max(s0.ai.hi, i0) - i0, rad);
          double ybar = C0, y = C0, s_opt = 0, fval = 0, r0 = 0;
          for (int sw = 0; sw < sweeps; ++sw) {
            auto phi = [&](double s) {
              double ia = i0 + s;
              return s0.eval_row(q.data(), ia) + m.f(&x, &ia, ybar) * dt;
            };
            ShiftMin best = min_shift_1d(phi, L, H, m.reg.shift_grid);
            r0 = std::abs(best.value - y);
            y = best.value;
            s_opt = best.s;
            fval = m.f(&x, &i0, ybar);
            ybar = y;
          }
          double dk = std::max(0.0, C0 + fval * dt - y);
          Yat(p, k) = y;
          S.dK[inc(p, k)] = dk;
          S.Z[inc(p, k)] = Zp[p];
          S.tilt[inc(p, k)] = s_opt / dt;
          S.V[inc(p, k)] = (n > 0 && s_opt != 0) ? -dk / (n * dt) * (s_opt > 0 ? 1.0 : -1.0) : 0.0;
          acc[p] += fval * dt - dk;
          if (sweeps > 1) resid[c] = std::max(resid[c], r0);
        }
      });
      continue;
    }

    // regress-now bases, any dimension
    if (k == 0) {
      const NowModel& M1 = m.now[1];
      m.gather_pts(1, pts1);
      VectorXd c1 = M1.fit(pts1, yv, m.mask);
      const double* x0 = m.B.x0.data();
      const double* a0 = m.B.a0.data();
      std::vector<double> bx(d), sx(d * d), rx(d * d);
      m.spec.b(x0, bx.data());
      m.spec.sigma(x0, sx.data());
      m.spec.rho(x0, rx.data());
      std::vector<double> Z0(d, 0.0);
      double cnt = 0;
      for (long p = 0; p < N; ++p) {
        if (!m.mask[p]) continue;
        cnt += 1;
        for (int j = 0; j < d; ++j) Z0[j] += yv[p] * m.B.dW[m.B.incr(p, 0) + j] / dt;
      }
      for (double& z : Z0) z /= cnt;
      auto cont = [&](const std::vector<double>& s) {
        std::vector<double> v(2 * d), ia(d);
        for (int j = 0; j < d; ++j) ia[j] = a0[j] + s[j];
        double sum = 0;
        for (long p = 0; p < N; ++p) {
          if (!m.mask[p]) continue;
          const double* dw = &m.B.dW[m.B.incr(p, 0)];
          const double* db = &m.B.dB[m.B.incr(p, 0)];
          for (int r = 0; r < d; ++r) {
            double val = x0[r] + bx[r] * dt;
            for (int c = 0; c < d; ++c) val += rx[r * d + c] * ia[c] * dt + sx[r * d + c] * dw[c];
            v[r] = val;
            v[d + r] = ia[r] + db[r];
          }
          sum += M1.eval(c1, v.data());
        }
        return sum / cnt;
      };
      std::vector<double> zero(d, 0.0);
      double C0 = cont(zero);
      double ybar = C0, y = C0, fval = 0;
      std::vector<double> s_opt(d, 0.0);
      for (int sw = 0; sw < sweeps; ++sw) {
        auto phi = [&](const std::vector<double>& s) {
          std::vector<double> ia(d);
          for (int j = 0; j < d; ++j) ia[j] = a0[j] + s[j];
          return cont(s) + m.f(x0, ia.data(), ybar) * dt;
        };
        if (d == 1) {
          double L = std::max(std::min(M1.lo[1], a0[0]) - a0[0], -rad), H = std::min(std::max(M1.hi[1], a0[0]) - a0[0], rad);
          ShiftMin b = min_shift_1d([&](double s) { return phi(std::vector<double>{s}); }, L, H, m.reg.shift_grid);
          y = b.value;
          s_opt[0] = b.s;
        } else {
          y = min_shift_ball(phi, d, rad, s_opt);
        }
        fval = m.f(x0, a0, ybar);
        ybar = y;
      }
      double dk = std::max(0.0, C0 + fval * dt - y);
      double ns = 0;
      for (double v : s_opt) ns += v * v;
      ns = std::sqrt(ns);
      for (long p = 0; p < N; ++p) {
        Yat(p, 0) = y;
        S.dK[inc(p, 0)] = dk;
        for (int j = 0; j < d; ++j) {
          std::size_t o = inc(p, 0) * d + j;
          S.Z[o] = Z0[j];
          S.tilt[o] = s_opt[j] / dt;
          S.V[o] = (n > 0 && ns > 0) ? -dk / (n * dt) * s_opt[j] / ns : 0.0;
        }
        acc[p] += fval * dt - dk;
      }
      continue;
    }
    const NowModel& M = m.now[k];
    m.gather_pts(k, pts);
    VectorXd cC = M.fit(pts, yv, m.mask);
    std::vector<VectorXd> cZ(d);
    for (int j = 0; j < d; ++j) {
      std::vector<double> w(N);
      for (long p = 0; p < N; ++p) w[p] = yv[p] * m.B.dW[m.B.incr(p, k) + j] / dt;
      cZ[j] = M.fit(pts, w, m.mask);
    }
    parallel_chunks(N, [&](std::size_t c, std::size_t lo, std::size_t hi) {
      std::vector<double> v(2 * d), ia(d), s_opt(d);
      for (std::size_t p = lo; p < hi; ++p) {
        const double* x = &pts[p * 2 * d];
        const double* i0 = &pts[p * 2 * d + d];
        double C0 = M.eval(cC, x);
        for (int j = 0; j < d; ++j) S.Z[inc(p, k) * d + j] = M.eval(cZ[j], x);
        double ybar = C0, y = C0, fval = 0, r0 = 0;
        auto cont = [&](const std::vector<double>& s) {
          for (int j = 0; j < d; ++j) {
            v[j] = x[j];
            ia[j] = i0[j] + s[j];
            v[d + j] = ia[j];
          }
          return M.eval(cC, v.data());
        };
        for (int sw = 0; sw < sweeps; ++sw) {
          auto phi = [&](const std::vector<double>& s) {
            double cv = cont(s);
            return cv + m.f(x, ia.data(), ybar) * dt;
          };
          double yn;
          if (d == 1) {
            double L = std::max(std::min(M.lo[1], i0[0]) - i0[0], -rad), H = std::min(std::max(M.hi[1], i0[0]) - i0[0], rad);
            std::vector<double> sv(1);
            ShiftMin b = min_shift_1d([&](double s) { sv[0] = s; return phi(sv); }, L, H, m.reg.shift_grid);
            yn = b.value;
            s_opt[0] = b.s;
          } else {
            yn = min_shift_ball(phi, d, rad, s_opt);
          }
          r0 = std::abs(yn - y);
          y = yn;
          fval = m.f(x, i0, ybar);
          ybar = y;
        }
        double dk = std::max(0.0, C0 + fval * dt - y);
        double ns = 0;
        for (double t : s_opt) ns += t * t;
        ns = std::sqrt(ns);
        Yat(p, k) = y;
        S.dK[inc(p, k)] = dk;
        for (int j = 0; j < d; ++j) {
          std::size_t o = inc(p, k) * d + j;
          S.tilt[o] = s_opt[j] / dt;
          S.V[o] = (n > 0 && ns > 0) ? -dk / (n * dt) * s_opt[j] / ns : 0.0;
        }
        acc[p] += fval * dt - dk;
        if (sweeps > 1) resid[c] = std::max(resid[c], r0);
      }
    });
  }

  // summaries over non-flagged paths
  std::vector<double> q, cm, kt;
  q.reserve(N);
  cm.reserve(N);
  kt.reserve(N);
  for (long p = 0; p < N; ++p) {
    if (!m.mask[p]) continue;
    double ks = 0;
    for (int k = 0; k < K; ++k) ks += S.dK[inc(p, k)];
    q.push_back(acc[p] + Yat(p, K));
    kt.push_back(ks);
    cm.push_back(n > 0 ? ks / n : 0.0);
  }
  bool anti = m.B.antithetic && m.B.n_blown == 0;
  MeanSe qs = mean_se(q, anti), cs = mean_se(cm, anti), ks = mean_se(kt, anti);
  S.u = Yat(0, 0);
  S.u_se = qs.se;
  S.pathwise_mean = qs.mean;
  S.constraint_mass = cs.mean;
  S.constraint_se = cs.se;
  S.K_mean = ks.mean;
  for (double r : resid) S.max_residual = std::max(S.max_residual, r);
  return S;
}

BackwardSolution solve_penalized(const ProblemSpec& spec, const PathBundle& bundle, double n,
                                 const RegressionConfig& reg) {
  PenalizedSolver s(spec, bundle, reg);
  return s.solve(n);
}

// ------------------------------------------------------------------ ladder

void ladder_verdicts(LadderReport& r) {
  r.monotone = true;
  r.constraint_decay = true;
  r.monotone_violations.clear();
  for (std::size_t j = 0; j + 1 < r.levels.size(); ++j) {
    const auto &a = r.levels[j], &b = r.levels[j + 1];
    double band = 2.0 * std::sqrt(a.se * a.se + b.se * b.se);
    if (b.u > a.u + band) {
      r.monotone = false;
      std::ostringstream os;
      os << "u(" << b.n << ") = " << b.u << " exceeds u(" << a.n << ") = " << a.u << " by more than " << band;
      r.monotone_violations.push_back(os.str());
    }
    double cb = 2.0 * std::sqrt(a.constraint_se * a.constraint_se + b.constraint_se * b.constraint_se);
    if (b.constraint_mass > a.constraint_mass + cb) r.constraint_decay = false;
  }
  if (r.levels.size() >= 2 && !(r.levels.back().constraint_mass < 0.5 * r.levels.front().constraint_mass) &&
      r.levels.front().constraint_mass > 1e-9)
    r.constraint_decay = false;
  if (!r.levels.empty()) {
    r.final_u = r.levels.back().u;
    r.final_se = r.levels.back().se;
  }
  r.converged = r.levels.size() >= 2 &&
                std::abs(r.levels.back().u - r.levels[r.levels.size() - 2].u) <= r.tol_u;
}

LadderReport run_ladder(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                        const std::vector<double>& a, long n_paths, uint64_t seed, const std::vector<double>& schedule,
                        const RegressionConfig& reg, const LadderOptions& opt, BackwardSolution* kept,
                        PathBundle* bundle_out) {
  if (schedule.empty()) throw ConfigError("penalization schedule is empty");
  for (std::size_t j = 0; j + 1 < schedule.size(); ++j)
    if (!(schedule[j + 1] > schedule[j])) throw ConfigError("penalization schedule must be strictly increasing");
  SimOptions so;
  so.antithetic = opt.antithetic;
  PathBundle bundle = simulate(spec, grid, x, a, n_paths, seed, so);
  PenalizedSolver solver(spec, bundle, reg);
  LadderReport r;
  r.schedule = schedule;
  r.tol_u = opt.tol_u;
  r.n_paths = n_paths;
  r.steps = grid.steps;
  r.seed = seed;
  r.x = x;
  r.a = a;
  r.t = grid.t_start;
  r.reg = solver.config();
  r.warnings = solver.warnings();
  for (std::size_t j = 0; j < schedule.size(); ++j) {
    auto t0 = std::chrono::steady_clock::now();
    BackwardSolution s = solver.solve(schedule[j]);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.levels.push_back({schedule[j], s.u, s.u_se, s.constraint_mass, s.constraint_se, s.K_mean, s.pathwise_mean, secs});
    if (kept && static_cast<int>(j) == opt.keep_level) *kept = std::move(s);
    if (opt.early_stop && j >= 1) {
      double du = std::abs(r.levels[j].u - r.levels[j - 1].u);
      if (du <= opt.tol_u && r.levels[j].constraint_mass < opt.tol_K) {
        r.schedule.resize(j + 1);
        break;
      }
    }
  }
  ladder_verdicts(r);
  if (bundle_out) *bundle_out = std::move(bundle);
  return r;
}

json LadderReport::to_json(bool timing) const {
  json lv = json::array();
  for (auto& l : levels) {
    json e = {{"n", l.n},
              {"u", l.u},
              {"stderr", l.se},
              {"constraint_mass", l.constraint_mass},
              {"constraint_stderr", l.constraint_se},
              {"K_mean", l.K_mean},
              {"pathwise_mean", l.pathwise_mean}};
    if (timing) e["seconds"] = l.seconds;
    lv.push_back(e);
  }
  return {{"schedule", schedule},
          {"levels", lv},
          {"monotone", monotone},
          {"monotone_violations", monotone_violations},
          {"constraint_decay", constraint_decay},
          {"converged", converged},
          {"final_u", final_u},
          {"final_stderr", final_se},
          {"tol_u", tol_u},
          {"stopping_rule", "heuristic: |u_last - u_prev| <= tol_u"},
          {"n_paths", n_paths},
          {"steps", steps},
          {"seed", seed},
          {"t", t},
          {"x", x},
          {"a", a},
          {"regression", reg.to_json()},
          {"warnings", warnings}};
}

std::string LadderReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "n,u,stderr,constraint_mass,constraint_stderr,K_mean,pathwise_mean\n";
  for (auto& l : levels)
    os << l.n << ',' << l.u << ',' << l.se << ',' << l.constraint_mass << ',' << l.constraint_se << ',' << l.K_mean
       << ',' << l.pathwise_mean << '\n';
  return os.str();
}

// ------------------------------------------------------------ diagnostics

json AIndependence::to_json() const {
  return {{"a_list", a_list}, {"u", u}, {"stderr", se}, {"max_discrepancy", max_discrepancy},
          {"combined_stderr", combined_se}, {"within_3se", within}};
}

AIndependence check_a_independence(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                                   const std::vector<std::vector<double>>& a_list, long n_paths,
                                   const std::vector<uint64_t>& seed_list, const std::vector<double>& schedule,
                                   const RegressionConfig& reg, const LadderOptions& opt) {
  if (a_list.size() < 2) throw ConfigError("need at least two anchor points");
  if (seed_list.size() != a_list.size()) throw ConfigError("seed_list must have one seed per anchor point");
  AIndependence r;
  r.a_list = a_list;
  for (std::size_t j = 0; j < a_list.size(); ++j) {
    r.ladders.push_back(run_ladder(spec, grid, x, a_list[j], n_paths, seed_list[j], schedule, reg, opt));
    r.u.push_back(r.ladders.back().final_u);
    r.se.push_back(r.ladders.back().final_se);
  }
  r.within = true;
  for (std::size_t i = 0; i < r.u.size(); ++i)
    for (std::size_t j = i + 1; j < r.u.size(); ++j) {
      double disc = std::abs(r.u[i] - r.u[j]);
      double cse = std::sqrt(r.se[i] * r.se[i] + r.se[j] * r.se[j]);
      if (disc >= r.max_discrepancy) {
        r.max_discrepancy = disc;
        r.combined_se = cse;
      }
      if (disc > 3.0 * cse) r.within = false;
    }
  return r;
}

json GrowthCheck::to_json() const {
  return {{"x_exponent", x_exponent}, {"a_exponent", a_exponent}, {"schedule", schedule},
          {"C_fit", C_fit},           {"ratio", ratio},           {"stable", stable},
          {"pass", pass}};
}

GrowthCheck check_growth_bound(const std::vector<GrowthPoint>& points, const ProblemSpec& spec,
                               double stability_factor) {
  if (points.empty()) throw ConfigError("growth check needs at least one evaluation point");
  GrowthCheck g;
  const auto& G = spec.growth;
  g.x_exponent = G.x_exponent();
  g.a_exponent = G.a_exponent();
  std::size_t L = points.front().report->levels.size();
  for (auto& pt : points)
    if (!pt.report || pt.report->levels.size() != L) throw ConfigError("growth check needs ladders of equal length");
  for (std::size_t j = 0; j < L; ++j) {
    g.schedule.push_back(points.front().report->levels[j].n);
    double C = 0;
    for (auto& pt : points) {
      double nx = 0, na = 0;
      for (double v : pt.x) nx += v * v;
      for (double v : pt.a) na += v * v;
      nx = std::sqrt(nx);
      na = std::sqrt(na);
      double tmpl = 1.0 + std::pow(nx, g.x_exponent) + std::pow(na, g.a_exponent);
      if (G.p_rho >= 1.0) tmpl *= std::exp(na);
      C = std::max(C, std::abs(pt.report->levels[j].u) / tmpl);
    }
    g.C_fit.push_back(C);
  }
  double cmax = *std::max_element(g.C_fit.begin(), g.C_fit.end());
  double cmin = *std::min_element(g.C_fit.begin(), g.C_fit.end());
  g.ratio = cmin > 0 ? cmax / cmin : (cmax == 0 ? 1.0 : std::numeric_limits<double>::infinity());
  g.stable = g.ratio <= stability_factor;
  g.pass = g.stable && std::isfinite(cmax);
  return g;
}

}  // namespace vhj
