#include "problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Dense>

namespace vhj {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double GrowthProfile::x_exponent() const { return std::max({p_F, q_F, p_g, q_g}); }

double GrowthProfile::a_exponent() const {
  double pq = std::max(p_F, q_g);
  if (p_rho < 1.0) return std::max(pq / (1.0 - p_rho), p_conj());
  return std::max(pq, p_conj());
}

json to_json(const GrowthProfile& g) {
  return json{{"p_rho", g.p_rho}, {"p", g.p},     {"q", g.q},         {"p_F", g.p_F}, {"q_F", g.q_F},
              {"p_g", g.p_g},     {"q_g", g.q_g}, {"m_F", g.m_F},     {"M_F", g.M_F}, {"m_g", g.m_g},
              {"M_g", g.M_g},     {"L_F", g.L_F}, {"M_rho", g.M_rho}, {"L_coef", g.L_coef}};
}

GrowthProfile growth_from_json(const json& j, GrowthProfile g) {
  auto rd = [&](const char* k, double& v) {
    if (j.contains(k)) v = j.at(k).get<double>();
  };
  rd("p_rho", g.p_rho); rd("p", g.p); rd("q", g.q); rd("p_F", g.p_F); rd("q_F", g.q_F);
  rd("p_g", g.p_g); rd("q_g", g.q_g); rd("m_F", g.m_F); rd("M_F", g.M_F); rd("m_g", g.m_g);
  rd("M_g", g.M_g); rd("L_F", g.L_F); rd("M_rho", g.M_rho); rd("L_coef", g.L_coef);
  return g;
}

json ValidationReport::to_json() const {
  json f = json::array();
  for (auto& x : findings) f.push_back({{"check", x.check}, {"pass", x.pass}, {"detail", x.detail}});
  return {{"pass", pass}, {"structural_error", structural_error}, {"findings", f}};
}

json CrosscheckReport::to_json() const {
  return {{"max_discrepancy", max_discrepancy}, {"lipschitz_ok", lipschitz_ok}, {"growth_ok", growth_ok},
          {"first_violation", first_violation}, {"samples", samples}};
}

namespace {

std::string fmt_vec(const double* v, int n) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < n; ++i) os << (i ? ", " : "") << v[i];
  os << ")";
  return os.str();
}

double norm(const double* v, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

double powabs(double r, double e) { return e == 0.0 ? 1.0 : std::pow(r, e); }

}  // namespace

std::vector<Finding> check_growth_rules(const GrowthProfile& g) {
  std::vector<Finding> out;
  auto add = [&](const std::string& name, bool ok, const std::string& msg) { out.push_back({name, ok, ok ? "" : msg}); };
  add("p > 1", g.p > 1.0, "p must exceed 1");
  add("q >= p", g.q >= g.p, "q must be at least p");
  add("p_rho in [0,1]", g.p_rho >= 0.0 && g.p_rho <= 1.0, "p_rho must lie in [0,1]");
  bool nonneg = g.p_F >= 0 && g.q_F >= 0 && g.p_g >= 0 && g.q_g >= 0 && g.m_F >= 0 && g.M_F >= 0 && g.m_g >= 0 &&
                g.M_g >= 0 && g.L_F >= 0 && g.M_rho >= 0 && g.L_coef >= 0;
  add("nonnegative constants", nonneg, "growth constants and exponents must be nonnegative");
  if (g.q > 1.0 && g.p_rho < 1.0) {
    double cap = (1.0 - g.p_rho) * g.q / (g.q - 1.0);
    std::ostringstream m1, m2;
    m1 << "q_F must be below (1-p_rho)q/(q-1) = " << cap;
    m2 << "p_g must be below (1-p_rho)q/(q-1) = " << cap;
    add("q_F bound", g.q_F < cap, m1.str());
    add("p_g bound", g.p_g < cap, m2.str());
  } else if (g.p_rho == 1.0) {
    add("q_F bound", g.q_F == 0.0, "q_F must be 0 when p_rho=1");
    add("p_g bound", g.p_g == 0.0, "p_g must be 0 when p_rho=1");
  }
  return out;
}

ValidationReport validate(const ProblemSpec& spec, const ValidationOptions& opt) {
  ValidationReport rep;
  const int d = spec.dim;
  auto fail_struct = [&](const std::string& what) {
    rep.structural_error = true;
    rep.pass = false;
    rep.findings.push_back({"structure", false, what});
  };
  if (d < 1) fail_struct("dim must be at least 1");
  if (!(spec.T > 0.0)) fail_struct("horizon T must be positive");
  if (!spec.b || !spec.sigma || !spec.rho || !spec.F || !spec.g) fail_struct("missing coefficient function");
  if (rep.structural_error) return rep;

  // Output-size probe: write into a buffer padded with a sentinel and look for
  // unwritten slots or writes past the expected length.
  constexpr double kSentinel = -7.77e307;
  constexpr int kPad = 8;
  std::vector<double> x0(d, 0.5);
  auto probe = [&](const char* name, const std::function<void(const double*, double*)>& fn, int need) {
    std::vector<double> buf(need + kPad, kSentinel);
    fn(x0.data(), buf.data());
    for (int i = 0; i < need; ++i)
      if (buf[i] == kSentinel) {
        fail_struct(std::string(name) + " writes fewer than " + std::to_string(need) + " entries");
        return;
      }
    for (int i = need; i < need + kPad; ++i)
      if (buf[i] != kSentinel) {
        fail_struct(std::string(name) + " writes more than " + std::to_string(need) + " entries for dim " +
                    std::to_string(d));
        return;
      }
  };
  probe("drift b", spec.b, d);
  probe("diffusion sigma", spec.sigma, d * d);
  probe("control_vol rho", spec.rho, d * d);
  if (rep.structural_error) return rep;

  for (auto& f : check_growth_rules(spec.growth)) {
    if (!f.pass) rep.pass = false;
    rep.findings.push_back(f);
  }

  const auto& G = spec.growth;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(-opt.box, opt.box);
  auto draw = [&](std::vector<double>& v) {
    for (auto& e : v) e = U(rng);
  };
  std::vector<double> x(d), xp(d), z(d), z2(d), zm(d), bx(d), bxp(d), sx(d * d), sxp(d * d), rx(d * d), rxp(d * d);

  struct Worst {
    double excess = 0.0;
    std::string where;
  };
  Worst lip, rhog, flow, fup, fy, conv, glow, gup;
  auto note = [](Worst& w, double excess, const std::string& where) {
    if (excess > w.excess) {
      w.excess = excess;
      w.where = where;
    }
  };
  const double tol = opt.rel_tol;
  for (int s = 0; s < opt.sample_count; ++s) {
    draw(x); draw(xp); draw(z); draw(z2);
    spec.b(x.data(), bx.data()); spec.b(xp.data(), bxp.data());
    spec.sigma(x.data(), sx.data()); spec.sigma(xp.data(), sxp.data());
    spec.rho(x.data(), rx.data()); spec.rho(xp.data(), rxp.data());
    double db = 0, ds = 0, dr = 0, dx = 0;
    for (int i = 0; i < d; ++i) {
      db += (bx[i] - bxp[i]) * (bx[i] - bxp[i]);
      dx += (x[i] - xp[i]) * (x[i] - xp[i]);
    }
    for (int i = 0; i < d * d; ++i) {
      ds += (sx[i] - sxp[i]) * (sx[i] - sxp[i]);
      dr += (rx[i] - rxp[i]) * (rx[i] - rxp[i]);
    }
    double lhs = std::sqrt(db) + std::sqrt(ds) + std::sqrt(dr), rhs = G.L_coef * std::sqrt(dx);
    note(lip, lhs - rhs - tol * (1 + rhs), "x=" + fmt_vec(x.data(), d) + " x'=" + fmt_vec(xp.data(), d));

    double nx = norm(x.data(), d), nz = norm(z.data(), d);
    double rn = norm(rx.data(), d * d);
    double rb = G.M_rho * (1 + powabs(nx, G.p_rho));
    note(rhog, rn - rb - tol * (1 + rb), "x=" + fmt_vec(x.data(), d));

    double Fv = spec.F(x.data(), 0.0, z.data());
    double lo = -G.m_F * (1 + powabs(nx, G.p_F) - std::pow(nz, G.p) / G.p);
    double hi = G.M_F * (1 + powabs(nx, G.q_F) + std::pow(nz, G.q) / G.q);
    std::string at = "x=" + fmt_vec(x.data(), d) + " z=" + fmt_vec(z.data(), d);
    note(flow, lo - Fv - tol * (1 + std::abs(lo)), at);
    note(fup, Fv - hi - tol * (1 + std::abs(hi)), at);

    double y1 = U(rng), y2 = U(rng);
    double dF = std::abs(spec.F(x.data(), y1, z.data()) - spec.F(x.data(), y2, z.data()));
    note(fy, dF - G.L_F * std::abs(y1 - y2) - tol * (1 + dF), at);

    for (int i = 0; i < d; ++i) zm[i] = 0.5 * (z[i] + z2[i]);
    double mid = spec.F(x.data(), y1, zm.data());
    double avg = 0.5 * (spec.F(x.data(), y1, z.data()) + spec.F(x.data(), y1, z2.data()));
    note(conv, mid - avg - tol * (1 + std::abs(avg)), at);

    double gv = spec.g(x.data());
    double glo = -G.m_g * (1 + powabs(nx, G.p_g)), ghi = G.M_g * (1 + powabs(nx, G.q_g));
    note(glow, glo - gv - tol * (1 + std::abs(glo)), "x=" + fmt_vec(x.data(), d));
    note(gup, gv - ghi - tol * (1 + std::abs(ghi)), "x=" + fmt_vec(x.data(), d));
  }
  auto report = [&](const char* name, const Worst& w) {
    bool ok = w.excess <= 0.0;
    std::string det;
    if (!ok) {
      std::ostringstream os;
      os << "worst violation " << w.excess << " at " << w.where;
      det = os.str();
    }
    rep.findings.push_back({name, ok, det});
    if (!ok) rep.pass = false;
  };
  report("Lipschitz b, sigma, rho (sampled)", lip);
  report("rho growth (sampled)", rhog);
  report("F lower bound (sampled)", flow);
  report("F upper bound (sampled)", fup);
  report("F Lipschitz in y (sampled)", fy);
  report("F convex in z (sampled)", conv);
  report("g lower bound (sampled)", glow);
  report("g upper bound (sampled)", gup);
  return rep;
}

double search_radius(const ProblemSpec& spec, const ConjugateConfig& cfg, const double* a) {
  double na = norm(a, spec.dim);
  const auto& G = spec.growth;
  double R;
  if (G.m_F > 0.0)
    R = std::pow(G.p * (na + cfg.margin) / G.m_F, 1.0 / (G.p - 1.0));
  else
    R = 10.0 * (na + cfg.margin);
  return std::max(R, 1.0);
}

namespace {

template <class Fn>
double golden(Fn&& fn, double lo, double hi, double tol, double& best_x) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - r * (hi - lo), e = lo + r * (hi - lo);
  double fc = fn(c), fe = fn(e);
  while (hi - lo > tol) {
    if (fc <= fe) {
      hi = e; e = c; fe = fc;
      c = hi - r * (hi - lo); fc = fn(c);
    } else {
      lo = c; c = e; fc = fe;
      e = lo + r * (hi - lo); fe = fn(e);
    }
  }
  best_x = 0.5 * (lo + hi);
  return fn(best_x);
}

}  // namespace

ConjugateResult conjugate_numeric(const ProblemSpec& spec, const ConjugateConfig& cfg, const double* x,
                                  const double* a, double y) {
  if (cfg.grid_points < 3) throw ConfigError("grid_points must be at least 3");
  if (!(cfg.tol > 0)) throw ConfigError("conjugate tol must be positive");
  const int d = spec.dim;
  double R = search_radius(spec, cfg, a);
  std::vector<double> z(d), best(d);
  auto phi = [&](const std::vector<double>& zz) {
    double v = spec.F(x, y, zz.data());
    if (!std::isfinite(v)) throw NumericalError("non-finite F at z=" + fmt_vec(zz.data(), d));
    for (int i = 0; i < d; ++i) v += a[i] * zz[i];
    return v;
  };
  int gp = cfg.grid_points;
  if (d > 1) gp = std::max(3, static_cast<int>(std::floor(std::pow(2.0e5, 1.0 / d))));
  if (gp % 2 == 0) ++gp;  // keep z = 0 on the grid
  for (int attempt = 0; attempt < 12; ++attempt) {
    double h = 2.0 * R / (gp - 1);
    double bv = std::numeric_limits<double>::infinity(), bn = 0;
    long total = 1;
    for (int i = 0; i < d; ++i) total *= gp;
    std::vector<int> idx(d, 0);
    for (long t = 0; t < total; ++t) {
      long r = t;
      for (int i = 0; i < d; ++i) {
        idx[i] = static_cast<int>(r % gp);
        r /= gp;
        z[i] = -R + h * idx[i];
      }
      double v = phi(z);
      double nz = norm(z.data(), d);
      if (v < bv || (v == bv && nz < bn)) {
        bv = v; bn = nz; best = z;
      }
    }
    // coordinate golden-section polish
    int rounds = d == 1 ? 1 : std::max(1, cfg.refine_iters);
    for (int it = 0; it < rounds; ++it) {
      for (int i = 0; i < d; ++i) {
        double c0 = best[i], xi;
        auto line = [&](double t) {
          z = best;
          z[i] = t;
          return phi(z);
        };
        double v = golden(line, c0 - h, c0 + h, cfg.tol, xi);
        if (v <= bv) {
          bv = v;
          best[i] = xi;
        }
      }
    }
    bool on_edge = false;
    for (int i = 0; i < d; ++i)
      if (std::abs(best[i]) >= R - 1.5 * h) on_edge = true;
    if (!on_edge) return {-bv, best};
    R *= 2.0;
  }
  throw NumericalError("conjugate search did not localize the infimum; F may not be coercive");
}

double conjugate(const ProblemSpec& spec, const ConjugateConfig& cfg, const double* x, const double* a, double y) {
  if (spec.f_closed) return spec.f_closed(x, a, y);
  return conjugate_numeric(spec, cfg, x, a, y).value;
}

std::function<double(const double*, const double*, double)> make_generator(const ProblemSpec& spec,
                                                                          ConjugateConfig cfg) {
  if (spec.f_closed) return spec.f_closed;
  return [spec, cfg](const double* x, const double* a, double y) {
    return conjugate_numeric(spec, cfg, x, a, y).value;
  };
}

CrosscheckReport conjugate_crosscheck(const ProblemSpec& spec, const ConjugateConfig& cfg, int sample_count,
                                      uint64_t seed, double box) {
  const int d = spec.dim;
  const auto& G = spec.growth;
  CrosscheckReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-box, box);
  ConjugateConfig fine = cfg;
  fine.grid_points = 2 * cfg.grid_points + 1;
  std::vector<double> x(d), a(d);
  for (int s = 0; s < sample_count; ++s) {
    for (auto& v : x) v = U(rng);
    for (auto& v : a) v = U(rng);
    double y = U(rng), y2 = U(rng);
    double num = conjugate_numeric(spec, cfg, x.data(), a.data(), y).value;
    double ref = spec.f_closed ? spec.f_closed(x.data(), a.data(), y)
                               : conjugate_numeric(spec, fine, x.data(), a.data(), y).value;
    rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(num - ref));

    std::string where = "x=" + fmt_vec(x.data(), d) + " a=" + fmt_vec(a.data(), d);
    double f2 = conjugate(spec, cfg, x.data(), a.data(), y2);
    double f1 = conjugate(spec, cfg, x.data(), a.data(), y);
    if (std::abs(f1 - f2) > G.L_F * std::abs(y - y2) * (1 + 1e-9) + 1e-8) {
      rep.lipschitz_ok = false;
      if (rep.first_violation.empty())
        rep.first_violation = "Lipschitz in y at " + where;
    }
    double f0 = conjugate(spec, cfg, x.data(), a.data(), 0.0);
    double nx = norm(x.data(), d), na = norm(a.data(), d);
    double pc = G.p_conj(), qc = G.q_conj();
    if (G.m_F > 0) {
      double up = G.m_F * (1 + powabs(nx, G.p_F) + std::pow(na, pc) / (pc * std::pow(G.m_F, pc)));
      if (f0 > up + 1e-8 * (1 + std::abs(up))) {
        rep.growth_ok = false;
        if (rep.first_violation.empty()) rep.first_violation = "upper growth bound of f at " + where;
      }
    }
    if (G.M_F > 0) {
      double lo = -G.M_F * (1 + powabs(nx, G.q_F) - std::pow(na, qc) / (qc * std::pow(G.M_F, qc)));
      if (f0 < lo - 1e-8 * (1 + std::abs(lo))) {
        rep.growth_ok = false;
        if (rep.first_violation.empty()) rep.first_violation = "lower growth bound of f at " + where;
      }
    }
    ++rep.samples;
  }
  if (!rep.lipschitz_ok || !rep.growth_ok) throw AssumptionError("conjugate check failed: " + rep.first_violation);
  return rep;
}

// ---------------------------------------------------------------- registry

namespace {

MatrixXd read_matrix(const json& p, const char* key, int d, double def) {
  if (!p.contains(key)) return MatrixXd::Identity(d, d) * def;
  const json& j = p.at(key);
  if (j.is_number()) return MatrixXd::Identity(d, d) * j.get<double>();
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw ConfigError(std::string("field '") + key + "' must be a scalar or a " + std::to_string(d) + "x" +
                      std::to_string(d) + " array");
  MatrixXd M(d, d);
  for (int i = 0; i < d; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != d)
      throw ConfigError(std::string("row ") + std::to_string(i) + " of '" + key + "' has wrong length");
    for (int k = 0; k < d; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

VectorXd read_vector(const json& p, const char* key, int d, double def) {
  if (!p.contains(key)) return VectorXd::Constant(d, def);
  const json& j = p.at(key);
  if (j.is_number()) return VectorXd::Constant(d, j.get<double>());
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw ConfigError(std::string("field '") + key + "' must have length " + std::to_string(d));
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = j[i].get<double>();
  return v;
}

double getd(const json& p, const char* k, double def) { return p.contains(k) ? p.at(k).get<double>() : def; }

// Smallest-effort choice of the lower growth exponent p in (1, 2] so that
// m(|z|^p/p - 1) <= c2 |z|^2 for all z.
double fit_lower_p(double m, double c2) {
  for (double p : {2.0, 1.5, 1.2, 1.1, 1.05, 1.02, 1.01}) {
    if (p == 2.0) {
      if (m / 2.0 <= c2) return p;
      continue;
    }
    double zs = std::pow(m / (2.0 * c2), 1.0 / (2.0 - p));
    double h = m * std::pow(zs, p) / p - c2 * zs * zs;
    if (h <= m) return p;
  }
  return 1.01;
}

void set_affine(ProblemSpec& s, const MatrixXd& A, const VectorXd& c) {
  int d = s.dim;
  s.b = [A, c, d](const double* x, double* out) {
    for (int i = 0; i < d; ++i) {
      double v = c[i];
      for (int k = 0; k < d; ++k) v += A(i, k) * x[k];
      out[i] = v;
    }
  };
}

// sigma(x) = diag(C x) + D
std::function<void(const double*, double*)> diag_affine(const MatrixXd& C, const MatrixXd& D) {
  int d = static_cast<int>(D.rows());
  return [C, D, d](const double* x, double* out) {
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) out[i * d + k] = D(i, k);
    for (int i = 0; i < d; ++i) {
      double v = 0;
      for (int k = 0; k < d; ++k) v += C(i, k) * x[k];
      out[i * d + i] += v;
    }
  };
}

std::function<void(const double*, double*)> const_matrix(const MatrixXd& M) { return diag_affine(MatrixXd::Zero(M.rows(), M.rows()), M); }

ProblemSpec make_kpz(const json& p) {
  ProblemSpec s;
  s.name = "kpz";
  s.dim = static_cast<int>(getd(p, "dim", 1));
  s.T = getd(p, "T", 1.0);
  double lam = getd(p, "lambda", 0.5);
  if (!(lam > 0)) throw ConfigError("kpz: lambda must be positive");
  int d = s.dim;
  std::string gname = p.contains("g") ? p.at("g").get<std::string>() : "cos";
  double gc = getd(p, "g_const", 0.0);
  set_affine(s, MatrixXd::Zero(d, d), VectorXd::Zero(d));
  s.sigma = const_matrix(MatrixXd::Identity(d, d));
  s.rho = s.sigma;
  s.F = [lam, d](const double*, double, const double* z) {
    double r = 0;
    for (int i = 0; i < d; ++i) r += z[i] * z[i];
    return lam * r;
  };
  s.f_closed = [lam, d](const double*, const double* a, double) {
    double r = 0;
    for (int i = 0; i < d; ++i) r += a[i] * a[i];
    return r / (4.0 * lam);
  };
  GrowthProfile G;
  G.p = G.q = 2.0;
  G.m_F = G.M_F = 2.0 * lam;
  G.M_rho = std::sqrt(static_cast<double>(d));
  if (gname == "cos") {
    s.g = [d](const double* x) {
      double v = 0;
      for (int i = 0; i < d; ++i) v += std::cos(x[i]);
      return v;
    };
    G.m_g = G.M_g = d;
  } else if (gname == "const") {
    s.g = [gc](const double*) { return gc; };
    G.m_g = G.M_g = std::abs(gc);
  } else if (gname == "zero") {
    s.g = [](const double*) { return 0.0; };
  } else {
    throw ConfigError("kpz: unknown terminal '" + gname + "' (cos, const, zero)");
  }
  s.growth = growth_from_json(p.value("growth", json::object()), G);
  s.params = {{"lambda", lam}, {"g", gname}, {"g_const", gc}, {"dim", d}, {"T", s.T}};
  return s;
}

ProblemSpec make_lq(const json& p) {
  ProblemSpec s;
  s.name = "lq";
  int d = static_cast<int>(getd(p, "dim", 1));
  s.dim = d;
  s.T = getd(p, "T", 1.0);
  MatrixXd A = read_matrix(p, "A", d, 0.0), B = read_matrix(p, "B", d, 1.0), C = read_matrix(p, "C", d, 0.0),
           D = read_matrix(p, "D", d, 1.0), Q = read_matrix(p, "Q", d, 1.0), S = read_matrix(p, "S", d, 0.0);
  double R = getd(p, "R", 1.0);
  if (!(R > 0)) throw ConfigError("lq: R must be positive");
  set_affine(s, A, VectorXd::Zero(d));
  s.sigma = diag_affine(C, D);
  s.rho = const_matrix(B);
  s.F = [Q, R, d](const double* x, double, const double* z) {
    double zz = 0, xq = 0;
    for (int i = 0; i < d; ++i) {
      zz += z[i] * z[i];
      for (int k = 0; k < d; ++k) xq += x[i] * Q(i, k) * x[k];
    }
    return zz / (4.0 * R) - xq;
  };
  s.f_closed = [Q, R, d](const double* x, const double* a, double) {
    double aa = 0, xq = 0;
    for (int i = 0; i < d; ++i) {
      aa += a[i] * a[i];
      for (int k = 0; k < d; ++k) xq += x[i] * Q(i, k) * x[k];
    }
    return R * aa + xq;
  };
  s.g = [S, d](const double* x) {
    double v = 0;
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) v += x[i] * S(i, k) * x[k];
    return v;
  };
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(0.5 * (Q + Q.transpose())), es(0.5 * (S + S.transpose()));
  GrowthProfile G;
  G.m_F = std::max(1.0, eq.eigenvalues().maxCoeff());
  G.p_F = 2.0;
  G.p = fit_lower_p(G.m_F, 1.0 / (4.0 * R));
  G.q = 2.0;
  G.M_F = 1.0 / (2.0 * R);
  G.q_F = 0.0;
  double smax = std::max(0.0, es.eigenvalues().maxCoeff()), smin = std::min(0.0, es.eigenvalues().minCoeff());
  G.M_g = smax;
  G.q_g = smax > 0 ? 2.0 : 0.0;
  G.m_g = -smin;
  G.p_g = smin < 0 ? 2.0 : 0.0;
  G.M_rho = B.norm();
  G.L_coef = A.norm() + C.norm();
  s.growth = growth_from_json(p.value("growth", json::object()), G);
  auto mat = [](const MatrixXd& M) {
    json j = json::array();
    for (int i = 0; i < M.rows(); ++i) {
      json r = json::array();
      for (int k = 0; k < M.cols(); ++k) r.push_back(M(i, k));
      j.push_back(r);
    }
    return j;
  };
  s.params = {{"dim", d}, {"T", s.T}, {"A", mat(A)}, {"B", mat(B)}, {"C", mat(C)}, {"D", mat(D)},
              {"Q", mat(Q)}, {"R", R},  {"S", mat(S)}};
  return s;
}

// Utility problems are stored in convex form F~(x,y,z) = -F(x,-y,-z) with
// terminal -g, so the reported u is the negative of the reduced value function.
ProblemSpec make_power_utility(const json& p) {
  ProblemSpec s;
  s.name = "power_utility";
  s.dim = 1;
  s.T = getd(p, "T", 1.0);
  double gam = getd(p, "gamma", -1.0), r = getd(p, "r", 0.02), l0 = getd(p, "lambda0", 0.3),
         l1 = getd(p, "lambda1", 0.5), rc = getd(p, "rho_corr", -0.5), b0 = getd(p, "beta0", 0.0),
         b1 = getd(p, "beta1", -1.0), sg = getd(p, "sigma", 0.3);
  if (!(gam < 1.0) || gam == 0.0) throw ConfigError("power_utility: gamma must be < 1 and nonzero");
  if (std::abs(rc) > 1.0) throw ConfigError("power_utility: |rho_corr| must be at most 1");
  double k = gam / (1.0 - gam);
  double M = 1.0 + k * rc * rc;
  s.b = [=](const double* x, double* out) { out[0] = b0 + b1 * x[0] + k * sg * rc * (l0 + l1 * x[0]); };
  s.sigma = [sg](const double*, double* out) { out[0] = sg; };
  s.rho = s.sigma;
  auto h = [=](double x) {
    double l = l0 + l1 * x;
    return gam * r + 0.5 * k * l * l;
  };
  s.F = [=](const double* x, double, const double* z) { return 0.5 * M * z[0] * z[0] + h(x[0]); };
  s.f_closed = [=](const double* x, const double* a, double) { return 0.5 * a[0] * a[0] / M - h(x[0]); };
  s.g = [](const double*) { return 0.0; };
  GrowthProfile G;
  double c0 = std::abs(gam * r) + std::abs(k) * (l0 * l0 + std::abs(l0 * l1));
  double c2 = std::abs(k) * (l1 * l1 + std::abs(l0 * l1));
  if (k < 0) {
    G.m_F = std::max({c0, c2, 1e-3});
    G.p_F = 2.0;
    G.q_F = 0.0;
    G.M_F = std::max(M, gam * r);
  } else {
    G.m_F = std::max(std::abs(gam * r), 1e-3);
    G.p_F = 0.0;
    G.q_F = 2.0;
    G.M_F = std::max({M, c0, c2});
  }
  G.p = fit_lower_p(G.m_F, 0.5 * M);
  G.q = 2.0;
  G.M_rho = sg;
  G.L_coef = std::abs(b1 + k * sg * rc * l1);
  s.growth = growth_from_json(p.value("growth", json::object()), G);
  s.params = {{"gamma", gam}, {"r", r},         {"lambda0", l0}, {"lambda1", l1}, {"rho_corr", rc},
              {"beta0", b0},  {"beta1", b1},   {"sigma", sg},   {"T", s.T},      {"sign", -1}};
  return s;
}

ProblemSpec make_exp_utility(const json& p) {
  ProblemSpec s;
  s.name = "exp_utility";
  s.dim = 1;
  s.T = getd(p, "T", 1.0);
  double gam = getd(p, "gamma", 1.0), r = getd(p, "r", 0.02), lam = getd(p, "lambda", 0.3),
         rc = getd(p, "rho_corr", 0.5), b0 = getd(p, "beta0", 0.0), b1 = getd(p, "beta1", -1.0),
         sg = getd(p, "sigma", 0.3), K = getd(p, "strike", 0.0);
  if (!(gam > 0)) throw ConfigError("exp_utility: gamma must be positive");
  if (!(std::abs(rc) < 1.0)) throw ConfigError("exp_utility: |rho_corr| must be below 1");
  double M = 1.0 - rc * rc;
  double c0 = gam * r + 0.5 * lam * lam / gam;
  s.b = [=](const double* x, double* out) { out[0] = b0 + b1 * x[0] + sg * rc * lam; };
  s.sigma = [sg](const double*, double* out) { out[0] = sg; };
  s.rho = s.sigma;
  s.F = [=](const double*, double, const double* z) { return 0.5 * M * z[0] * z[0] - c0; };
  s.f_closed = [=](const double*, const double* a, double) { return 0.5 * a[0] * a[0] / M + c0; };
  s.g = [K](const double* x) { return -std::max(x[0] - K, 0.0); };
  GrowthProfile G;
  G.m_F = std::max(std::abs(c0), 1e-3);
  G.p = fit_lower_p(G.m_F, 0.5 * M);
  G.q = 2.0;
  G.M_F = M;
  G.m_g = 1.0 + std::abs(K);
  G.p_g = 1.0;
  G.M_g = 0.0;
  G.M_rho = sg;
  G.L_coef = std::abs(b1);
  s.growth = growth_from_json(p.value("growth", json::object()), G);
  s.params = {{"gamma", gam}, {"r", r},      {"lambda", lam}, {"rho_corr", rc}, {"beta0", b0},
              {"beta1", b1},  {"sigma", sg}, {"strike", K},   {"T", s.T},       {"sign", -1}};
  return s;
}

struct Monomial {
  double coef;
  std::vector<int> pow;
};

std::vector<Monomial> read_poly(const json& j, int d, const char* what) {
  std::vector<Monomial> out;
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array of {coef, pow}");
  for (auto& t : j) {
    Monomial m{t.at("coef").get<double>(), std::vector<int>(d, 0)};
    if (t.contains("pow")) {
      if (!t.at("pow").is_array() || static_cast<int>(t.at("pow").size()) != d)
        throw ConfigError(std::string(what) + ": 'pow' must have length dim");
      for (int i = 0; i < d; ++i) m.pow[i] = t.at("pow")[i].get<int>();
      for (int e : m.pow)
        if (e < 0) throw ConfigError(std::string(what) + ": negative power");
    }
    out.push_back(m);
  }
  return out;
}

double eval_poly(const std::vector<Monomial>& P, const double* x) {
  double v = 0;
  for (auto& m : P) {
    double t = m.coef;
    for (std::size_t i = 0; i < m.pow.size(); ++i)
      for (int e = 0; e < m.pow[i]; ++e) t *= x[i];
    v += t;
  }
  return v;
}

}  // namespace

ProblemSpec load_custom_problem(const json& j) {
  ProblemSpec s;
  s.name = "custom";
  if (!j.contains("dim")) throw ConfigError("custom problem: missing 'dim'");
  int d = j.at("dim").get<int>();
  if (d < 1) throw ConfigError("custom problem: dim must be at least 1");
  s.dim = d;
  s.T = getd(j, "T", 1.0);
  if (!(s.T > 0)) throw ConfigError("custom problem: T must be positive");
  json dr = j.value("drift", json::object()), sg = j.value("sigma", json::object()),
       rh = j.value("rho", json::object());
  set_affine(s, read_matrix(dr, "A", d, 0.0), read_vector(dr, "c", d, 0.0));
  s.sigma = diag_affine(read_matrix(sg, "C", d, 0.0), read_matrix(sg, "D", d, 1.0));
  s.rho = diag_affine(read_matrix(rh, "C", d, 0.0), read_matrix(rh, "D", d, 1.0));

  json Fj = j.value("F", json::object());
  bool has_quad = Fj.contains("quad");
  MatrixXd Mq = has_quad ? read_matrix(Fj, "quad", d, 0.0) : MatrixXd::Zero(d, d);
  struct PowTerm {
    double c, e;
  };
  std::vector<PowTerm> pw;
  if (Fj.contains("power"))
    for (auto& t : Fj.at("power")) {
      PowTerm pt{t.at("coef").get<double>(), t.at("exp").get<double>()};
      if (pt.c < 0 || pt.e < 1) throw ConfigError("custom problem: power terms need coef >= 0 and exp >= 1");
      pw.push_back(pt);
    }
  double cy = getd(Fj, "y_coef", 0.0);
  auto h = read_poly(Fj.value("h", json::array()), d, "F.h");
  s.F = [Mq, pw, cy, h, d](const double* x, double y, const double* z) {
    double v = 0, zz = 0;
    for (int i = 0; i < d; ++i) {
      zz += z[i] * z[i];
      for (int k = 0; k < d; ++k) v += 0.5 * z[i] * Mq(i, k) * z[k];
    }
    double nz = std::sqrt(zz);
    for (auto& t : pw) v += t.c * std::pow(nz, t.e);
    return v + cy * y + eval_poly(h, x);
  };
  if (has_quad && pw.empty()) {
    Eigen::LLT<MatrixXd> llt(0.5 * (Mq + Mq.transpose()));
    if (llt.info() != Eigen::Success) throw ConfigError("custom problem: F.quad must be positive definite");
    MatrixXd Mi = llt.solve(MatrixXd::Identity(d, d));
    s.f_closed = [Mi, cy, h, d](const double* x, const double* a, double y) {
      double v = 0;
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) v += 0.5 * a[i] * Mi(i, k) * a[k];
      return v - cy * y - eval_poly(h, x);
    };
  }
  auto gp = read_poly(j.value("g", json::array()), d, "g");
  s.g = [gp](const double* x) { return eval_poly(gp, x); };
  GrowthProfile G;
  G.L_F = std::abs(cy);
  s.growth = growth_from_json(j.value("growth", json::object()), G);
  s.params = j;
  return s;
}

ProblemSpec make_problem(const std::string& name, const json& params) {
  json p = params.is_null() ? json::object() : params;
  if (name == "kpz") return make_kpz(p);
  if (name == "lq") return make_lq(p);
  if (name == "power_utility") return make_power_utility(p);
  if (name == "exp_utility") return make_exp_utility(p);
  if (name == "custom") return load_custom_problem(p);
  throw ConfigError("unknown problem '" + name + "'");
}

std::vector<std::string> registry_names() { return {"kpz", "lq", "power_utility", "exp_utility", "custom"}; }

}  // namespace vhj
