#include "forward.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "parallel.hpp"
#include "rng.hpp"

namespace vhj {

void TimeGrid::check(double horizon) const {
  if (steps < 1) throw ConfigError("time grid needs at least one step");
  if (!(t_start < t_end)) throw ConfigError("time grid needs t_start < t_end");
  if (t_start < 0 || t_end > horizon * (1 + 1e-12)) throw ConfigError("time grid must lie inside [0, T]");
}

json MomentReport::to_json() const {
  return {{"m", m}, {"sup_moment_X", sup_moment_X}, {"moment_I", moment_I}, {"integrated_I", integrated_I},
          {"exp_factor", exp_factor}, {"C", C}, {"pass", pass}};
}

namespace {

constexpr uint32_t kStreamW = 1, kStreamB = 2;

PathBundle run(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
               const std::vector<double>& a, long n_paths, uint64_t seed, const TiltFn* nu, double n_bound,
               const SimOptions& opt) {
  grid.check(spec.T);
  const int d = spec.dim;
  if (static_cast<int>(x.size()) != d || static_cast<int>(a.size()) != d)
    throw ConfigError("start state dimension does not match problem dim");
  if (n_paths < 1) throw ConfigError("n_paths must be positive");
  if (opt.antithetic && n_paths % 2 != 0) throw ConfigError("antithetic sampling needs an even path count");
  PathBundle b;
  b.n_paths = n_paths;
  b.steps = grid.steps;
  b.dim = d;
  b.grid = grid;
  b.seed = seed;
  b.antithetic = opt.antithetic;
  b.x0 = x;
  b.a0 = a;
  const std::size_t nodes = static_cast<std::size_t>(n_paths) * (grid.steps + 1) * d;
  const std::size_t incs = static_cast<std::size_t>(n_paths) * grid.steps * d;
  b.X.resize(nodes);
  b.I.resize(nodes);
  b.dW.resize(incs);
  b.dB.resize(incs);
  if (nu) b.shift.assign(incs, 0.0);
  b.blown.assign(n_paths, 0);
  const double dt = grid.dt(), sq = std::sqrt(dt);

  parallel_chunks(static_cast<std::size_t>(n_paths), [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<double> bx(d), sx(d * d), rx(d * d), tilt(d, 0.0), ieff(d);
    for (std::size_t p = lo; p < hi; ++p) {
      uint64_t src = opt.antithetic ? p / 2 : p;
      double sign = (opt.antithetic && (p % 2 == 1)) ? -1.0 : 1.0;
      double* X = b.X.data() + b.node(p, 0);
      double* I = b.I.data() + b.node(p, 0);
      for (int j = 0; j < d; ++j) {
        X[j] = x[j];
        I[j] = a[j];
      }
      for (int k = 0; k < grid.steps; ++k) {
        double* dw = b.dW.data() + b.incr(p, k);
        double* db = b.dB.data() + b.incr(p, k);
        for (int j = 0; j < d; ++j) {
          dw[j] = sign * sq * normal_at(seed, src, k, j, kStreamW);
          db[j] = sign * sq * normal_at(seed, src, k, j, kStreamB);
        }
        const double* xk = X + k * d;
        const double* ik = I + k * d;
        if (nu) {
          (*nu)(k, grid.t(k), xk, ik, tilt.data());
          double nn = 0;
          for (int j = 0; j < d; ++j) nn += tilt[j] * tilt[j];
          if (std::sqrt(nn) > n_bound * (1 + 1e-12) + 1e-12) {
            std::ostringstream os;
            os << "tilt bound violated at step " << k << ", path " << p << ": |nu| = " << std::sqrt(nn)
               << " > " << n_bound;
            throw NumericalError(os.str());
          }
          double* sh = b.shift.data() + b.incr(p, k);
          for (int j = 0; j < d; ++j) sh[j] = tilt[j] * dt;
        }
        for (int j = 0; j < d; ++j) ieff[j] = ik[j] + tilt[j] * dt;
        spec.b(xk, bx.data());
        spec.sigma(xk, sx.data());
        spec.rho(xk, rx.data());
        double* xn = X + (k + 1) * d;
        double* in = I + (k + 1) * d;
        bool bad = false;
        for (int r = 0; r < d; ++r) {
          double v = xk[r] + bx[r] * dt;
          for (int c = 0; c < d; ++c) v += rx[r * d + c] * ieff[c] * dt + sx[r * d + c] * dw[c];
          xn[r] = v;
          in[r] = ieff[r] + db[r];
          if (!std::isfinite(v) || std::abs(v) > opt.blowup_level) bad = true;
        }
        if (bad) b.blown[p] = 1;
      }
    }
  });
  for (auto f : b.blown) b.n_blown += f;
  if (static_cast<double>(b.n_blown) > opt.blowup_fraction * n_paths) {
    std::ostringstream os;
    os << b.n_blown << " of " << n_paths << " paths exceeded |X| > " << opt.blowup_level;
    throw NumericalError(os.str());
  }
  return b;
}

}  // namespace

PathBundle simulate(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                    const std::vector<double>& a, long n_paths, uint64_t seed, const SimOptions& opt) {
  return run(spec, grid, x, a, n_paths, seed, nullptr, 0.0, opt);
}

PathBundle simulate_tilted(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                           const std::vector<double>& a, long n_paths, uint64_t seed, const TiltFn& nu,
                           double n_bound, const SimOptions& opt) {
  return run(spec, grid, x, a, n_paths, seed, &nu, n_bound, opt);
}

MeanSe mean_se(const std::vector<double>& v, bool antithetic) {
  std::size_t n = v.size();
  if (n == 0) return {};
  std::vector<double> w;
  const std::vector<double>* src = &v;
  if (antithetic && n >= 2) {
    w.resize(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) w[i] = 0.5 * (v[2 * i] + v[2 * i + 1]);
    src = &w;
  }
  const auto& s = *src;
  std::size_t m = s.size();
  // fixed-order chunked sums
  std::size_t nc = chunk_count(m);
  std::vector<double> part(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t i = c * kChunk; i < std::min(m, (c + 1) * kChunk); ++i) part[c] += s[i];
  double sum = 0;
  for (double p : part) sum += p;
  double mean = sum / m;
  std::fill(part.begin(), part.end(), 0.0);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t i = c * kChunk; i < std::min(m, (c + 1) * kChunk); ++i) part[c] += (s[i] - mean) * (s[i] - mean);
  double ss = 0;
  for (double p : part) ss += p;
  double se = m > 1 ? std::sqrt(ss / (m - 1) / m) : 0.0;
  return {mean, se};
}

MomentReport moment_diagnostics(const PathBundle& b, const ProblemSpec& spec, double m) {
  if (m < 1) throw ConfigError("moment order must be at least 1");
  const int d = b.dim;
  const double dt = b.grid.dt();
  const double pr = spec.growth.p_rho;
  const double ei = pr < 1.0 ? m / (1.0 - pr) : 2.0 * m;
  std::vector<double> supx(b.n_paths), ipow(b.n_paths), iint(b.n_paths), iexp(b.n_paths), iT(b.n_paths);
  for (long p = 0; p < b.n_paths; ++p) {
    double s = 0, acc = 0, absint = 0;
    for (int k = 0; k <= b.steps; ++k) {
      double nx = 0, ni = 0;
      for (int j = 0; j < d; ++j) {
        nx += b.x(p, k)[j] * b.x(p, k)[j];
        ni += b.i(p, k)[j] * b.i(p, k)[j];
      }
      s = std::max(s, std::pow(std::sqrt(nx), m));
      if (k < b.steps) {
        acc += std::pow(std::sqrt(ni), ei) * dt;
        absint += std::sqrt(ni) * dt;
      } else {
        iT[p] = std::pow(std::sqrt(ni), m);
      }
    }
    supx[p] = s;
    iint[p] = acc;
    iexp[p] = std::exp(absint);
  }
  MomentReport r;
  r.m = m;
  r.sup_moment_X = mean_se(supx, false).mean;
  r.moment_I = mean_se(iT, false).mean;
  r.integrated_I = mean_se(iint, false).mean;
  double nx0 = 0;
  for (double v : b.x0) nx0 += v * v;
  double base = 1.0 + std::pow(std::sqrt(nx0), m);
  if (pr < 1.0) {
    r.C = r.sup_moment_X / (base + r.integrated_I);
  } else {
    r.exp_factor = std::sqrt(mean_se(iexp, false).mean);
    r.C = r.sup_moment_X / ((base + std::sqrt(r.integrated_I)) * r.exp_factor);
  }
  r.pass = std::isfinite(r.C) && std::isfinite(r.sup_moment_X);
  return r;
}

namespace {
constexpr char kMagic[8] = {'V', 'H', 'J', 'P', 'A', 'T', 'H', '1'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated path bundle file");
}
void put_vec(std::ofstream& o, const std::vector<double>& v) {
  uint64_t n = v.size();
  put(o, n);
  o.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}
void get_vec(std::ifstream& in, std::vector<double>& v) {
  uint64_t n;
  get(in, n);
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw Error("truncated path bundle file");
}
}  // namespace

// Little-endian hosts only; the header records the layout so readers can check.
void dump_bundle(const PathBundle& b, const std::string& path) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw Error("cannot open " + path + " for writing");
  o.write(kMagic, 8);
  put(o, kVersion);
  put(o, static_cast<uint32_t>(b.dim));
  put(o, static_cast<uint32_t>(b.steps));
  put(o, static_cast<uint64_t>(b.n_paths));
  put(o, b.seed);
  put(o, static_cast<uint32_t>(b.antithetic));
  put(o, b.grid.t_start);
  put(o, b.grid.t_end);
  put_vec(o, b.x0);
  put_vec(o, b.a0);
  put_vec(o, b.X);
  put_vec(o, b.I);
  put_vec(o, b.dW);
  put_vec(o, b.dB);
  put_vec(o, b.shift);
}

PathBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char mg[8];
  in.read(mg, 8);
  if (!in || std::memcmp(mg, kMagic, 8) != 0) throw Error(path + " is not a path bundle file");
  uint32_t ver, d, steps, anti;
  uint64_t n;
  get(in, ver);
  if (ver != kVersion) throw Error("unsupported path bundle version " + std::to_string(ver));
  PathBundle b;
  get(in, d);
  get(in, steps);
  get(in, n);
  get(in, b.seed);
  get(in, anti);
  get(in, b.grid.t_start);
  get(in, b.grid.t_end);
  b.dim = static_cast<int>(d);
  b.steps = static_cast<int>(steps);
  b.grid.steps = b.steps;
  b.n_paths = static_cast<long>(n);
  b.antithetic = anti != 0;
  get_vec(in, b.x0);
  get_vec(in, b.a0);
  get_vec(in, b.X);
  get_vec(in, b.I);
  get_vec(in, b.dW);
  get_vec(in, b.dB);
  get_vec(in, b.shift);
  b.blown.assign(b.n_paths, 0);
  return b;
}

}  // namespace vhj
