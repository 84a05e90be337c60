#include "dual.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "parallel.hpp"

namespace vhj {

namespace {

int bin_of(const std::vector<double>& edges, double v) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

std::vector<double> quantile_edges(std::vector<double> v, int bins) {
  std::sort(v.begin(), v.end());
  std::vector<double> e(bins - 1);
  for (int j = 1; j < bins; ++j) e[j - 1] = v[static_cast<std::size_t>(static_cast<double>(j) / bins * (v.size() - 1))];
  return e;
}

}  // namespace

void BinnedField::eval(int k, const double* x, const double* i, double* out) const {
  if (k < 0 || k >= steps) {
    std::fill(out, out + dim, 0.0);
    return;
  }
  int bx = bin_of(x_edges[k], x[0]), bi = bin_of(i_edges[k], i[0]);
  const double* v = values.data() + ((static_cast<std::size_t>(k) * bins_x + bx) * bins_i + bi) * dim;
  std::copy(v, v + dim, out);
}

json BinnedField::to_json() const {
  return {{"steps", steps},   {"dim", dim},         {"bins_x", bins_x},     {"bins_i", bins_i},
          {"bound", bound},   {"x_edges", x_edges}, {"i_edges", i_edges},   {"values", values},
          {"counts", counts}, {"empty_bins", empty_bins}};
}

BinnedField BinnedField::from_json(const json& j) {
  BinnedField b;
  b.steps = j.at("steps").get<int>();
  b.dim = j.at("dim").get<int>();
  b.bins_x = j.at("bins_x").get<int>();
  b.bins_i = j.at("bins_i").get<int>();
  b.bound = j.value("bound", 0.0);
  b.x_edges = j.at("x_edges").get<std::vector<std::vector<double>>>();
  b.i_edges = j.at("i_edges").get<std::vector<std::vector<double>>>();
  b.values = j.at("values").get<std::vector<double>>();
  b.counts = j.value("counts", std::vector<double>{});
  b.empty_bins = j.value("empty_bins", 0L);
  std::size_t want = static_cast<std::size_t>(b.steps) * b.bins_x * b.bins_i * b.dim;
  if (b.values.size() != want || static_cast<int>(b.x_edges.size()) != b.steps ||
      static_cast<int>(b.i_edges.size()) != b.steps)
    throw ConfigError("binned table has inconsistent sizes");
  return b;
}

BinnedField bin_field(const PathBundle& bundle, const std::vector<double>& field, int dim, int bins_x, int bins_i,
                      double bound) {
  if (bins_x < 1 || bins_i < 1) throw ConfigError("bin counts must be positive");
  const int K = bundle.steps;
  const long N = bundle.n_paths;
  if (field.size() != static_cast<std::size_t>(N) * K * dim) throw ConfigError("field size does not match bundle");
  BinnedField t;
  t.steps = K;
  t.dim = dim;
  t.bins_x = bins_x;
  t.bins_i = bins_i;
  t.bound = bound;
  t.x_edges.resize(K);
  t.i_edges.resize(K);
  const std::size_t cells = static_cast<std::size_t>(bins_x) * bins_i;
  t.values.assign(K * cells * dim, 0.0);
  t.counts.assign(K * cells, 0.0);
  std::vector<double> xs, is;
  for (int k = 0; k < K; ++k) {
    xs.clear();
    is.clear();
    for (long p = 0; p < N; ++p) {
      if (!bundle.blown.empty() && bundle.blown[p]) continue;
      xs.push_back(bundle.x(p, k)[0]);
      // bins follow the state the control acts on
      is.push_back(bundle.i(p, k)[0]);
    }
    t.x_edges[k] = quantile_edges(xs, bins_x);
    t.i_edges[k] = quantile_edges(is, bins_i);
    for (long p = 0; p < N; ++p) {
      if (!bundle.blown.empty() && bundle.blown[p]) continue;
      int bx = bin_of(t.x_edges[k], bundle.x(p, k)[0]), bi = bin_of(t.i_edges[k], bundle.i(p, k)[0]);
      std::size_t c = k * cells + bx * bins_i + bi;
      t.counts[c] += 1;
      const double* v = field.data() + (static_cast<std::size_t>(p) * K + k) * dim;
      for (int j = 0; j < dim; ++j) t.values[c * dim + j] += v[j];
    }
  }
  for (std::size_t c = 0; c < t.counts.size(); ++c) {
    if (t.counts[c] == 0) {
      ++t.empty_bins;
      continue;
    }
    double nn = 0;
    for (int j = 0; j < dim; ++j) {
      t.values[c * dim + j] /= t.counts[c];
      nn += t.values[c * dim + j] * t.values[c * dim + j];
    }
    nn = std::sqrt(nn);
    if (bound > 0 && nn > bound)
      for (int j = 0; j < dim; ++j) t.values[c * dim + j] *= bound / nn;
  }
  return t;
}

GammaPath gamma_process(const ProblemSpec& spec, const PathBundle& bundle, const BackwardSolution& sol) {
  if (sol.n_paths != bundle.n_paths || sol.steps != bundle.steps) throw ConfigError("solution was not computed on this bundle");
  auto f = make_generator(spec);
  const long N = bundle.n_paths;
  const int K = bundle.steps;
  const double dt = bundle.grid.dt(), L = spec.growth.L_F;
  const double eps = 1e-8 * (1 + std::abs(sol.u));
  GammaPath g;
  g.n_paths = N;
  g.steps = K;
  g.gamma.assign(static_cast<std::size_t>(N) * K, 0.0);
  g.discount.assign(static_cast<std::size_t>(N) * (K + 1), 1.0);
  std::vector<long> clamps(chunk_count(N), 0);
  std::vector<double> mx(chunk_count(N), 0.0);
  parallel_chunks(N, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      double acc = 0;
      for (int k = 0; k < K; ++k) {
        double y = sol.y(p, k), gm = 0;
        if (std::abs(y) > eps) {
          const double* x = bundle.x(p, k);
          const double* i = bundle.i(p, k);
          gm = (f(x, i, y) - f(x, i, 0.0)) / y;
          // tolerance keeps round-off at |gamma| = L_F from counting as a clamp
          if (std::abs(gm) > L * (1 + 1e-9) + 1e-12) {
            gm = std::clamp(gm, -L, L);
            ++clamps[c];
          }
        }
        g.gamma[p * K + k] = gm;
        mx[c] = std::max(mx[c], std::abs(gm));
        acc += gm * dt;
        g.discount[p * (K + 1) + k + 1] = std::exp(acc);
      }
    }
  });
  for (long v : clamps) g.clamped += v;
  for (double v : mx) g.max_abs = std::max(g.max_abs, v);
  g.clamp_rate = static_cast<double>(g.clamped) / std::max<double>(1.0, static_cast<double>(N) * K);
  if (g.clamp_rate > 0.01) {
    std::ostringstream os;
    os << "gamma clamped on " << g.clamp_rate * 100 << "% of entries; check epsilon_y or the generator";
    g.warnings.push_back(os.str());
  }
  return g;
}

NuTable nu_star(const BackwardSolution& sol, const PathBundle& bundle, double n, int bins_x, int bins_i) {
  if (sol.tilt.empty()) throw ConfigError("solution carries no tilt field");
  if (sol.n_paths != bundle.n_paths || sol.steps != bundle.steps) throw ConfigError("solution was not computed on this bundle");
  return bin_field(bundle, sol.tilt, sol.dim, bins_x, bins_i, n);
}

TrialControl TrialControl::fixed(std::string label, std::vector<double> v) {
  TrialControl t;
  t.label = std::move(label);
  t.constant = std::move(v);
  return t;
}

TrialControl TrialControl::feedback(std::string label, std::shared_ptr<const NuTable> tb) {
  TrialControl t;
  t.label = std::move(label);
  t.table = std::move(tb);
  return t;
}

void TrialControl::eval(int k, const double* x, const double* i, double* out) const {
  if (table) {
    table->eval(k, x, i, out);
    return;
  }
  std::copy(constant.begin(), constant.end(), out);
}

json TiltedValueEstimate::to_json() const {
  return {{"nu", nu},         {"n_bound", n_bound}, {"estimate", estimate},
          {"stderr", stderr_}, {"n_paths", n_paths}, {"seed", seed}};
}

std::vector<double> path_functional(const ProblemSpec& spec, const PathBundle& b, const BinnedField* gamma) {
  auto f = make_generator(spec);
  const int d = b.dim, K = b.steps;
  const double dt = b.grid.dt();
  std::vector<double> q(b.n_paths, 0.0);
  parallel_chunks(b.n_paths, [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<double> ie(d);
    for (std::size_t p = lo; p < hi; ++p) {
      double acc = 0, disc = 1, lg = 0;
      for (int k = 0; k < K; ++k) {
        const double* x = b.x(p, k);
        const double* i = b.i(p, k);
        for (int j = 0; j < d; ++j) ie[j] = i[j] + (b.shift.empty() ? 0.0 : b.shift[b.incr(p, k) + j]);
        acc += disc * f(x, ie.data(), 0.0) * dt;
        if (gamma) {
          double gm;
          gamma->eval(k, x, i, &gm);
          lg += gm * dt;
          disc = std::exp(lg);
        }
      }
      q[p] = acc + disc * spec.g(b.x(p, K));
    }
  });
  return q;
}

TiltedValueEstimate dual_estimate(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                                  const std::vector<double>& a, const TrialControl& nu, double n_bound, long n_paths,
                                  uint64_t seed, const DualOptions& opt) {
  const int d = spec.dim;
  if (!nu.table && static_cast<int>(nu.constant.size()) != d) throw ConfigError("trial control dimension mismatch");
  if (nu.table && nu.table->dim != d) throw ConfigError("trial table dimension mismatch");
  if (opt.gamma && opt.gamma->dim != 1) throw ConfigError("gamma table must be scalar");
  SimOptions so;
  so.antithetic = opt.antithetic;
  TiltedValueEstimate e;
  e.nu = nu.label;
  e.n_bound = n_bound;
  e.n_paths = n_paths;
  e.seed = seed;
  std::vector<double> q;
  if (opt.mode == MeasureMode::Drift) {
    TiltFn fn = [&](int k, double, const double* xk, const double* ik, double* out) { nu.eval(k, xk, ik, out); };
    PathBundle b = simulate_tilted(spec, grid, x, a, n_paths, seed, fn, n_bound, so);
    q = path_functional(spec, b, opt.gamma.get());
    if (b.n_blown > 0) {
      std::vector<double> keep;
      for (long p = 0; p < b.n_paths; ++p)
        if (!b.blown[p]) keep.push_back(q[p]);
      q.swap(keep);
    }
  } else {
    // untilted paths reweighted by the likelihood ratio of the tilted law of I
    PathBundle b = simulate(spec, grid, x, a, n_paths, seed, so);
    q = path_functional(spec, b, opt.gamma.get());
    const double dt = grid.dt();
    parallel_chunks(b.n_paths, [&](std::size_t, std::size_t lo, std::size_t hi) {
      std::vector<double> v(d);
      for (std::size_t p = lo; p < hi; ++p) {
        double lw = 0;
        for (int k = 0; k < b.steps; ++k) {
          nu.eval(k, b.x(p, k), b.i(p, k), v.data());
          double nn = 0;
          for (int j = 0; j < d; ++j) {
            lw += v[j] * b.dB[b.incr(p, k) + j] - 0.5 * v[j] * v[j] * dt;
            nn += v[j] * v[j];
          }
          if (std::sqrt(nn) > n_bound * (1 + 1e-12) + 1e-12) throw NumericalError("tilt bound violated in weighting mode");
        }
        q[p] *= std::exp(lw);
      }
    });
  }
  MeanSe ms = mean_se(q, opt.antithetic && q.size() == static_cast<std::size_t>(n_paths));
  e.estimate = ms.mean;
  e.stderr_ = ms.se;
  return e;
}

json SandwichReport::to_json() const {
  json t = json::array();
  for (std::size_t j = 0; j < trials.size(); ++j) {
    json e = trials[j].to_json();
    e["above_lower_band"] = static_cast<bool>(above[j]);
    t.push_back(e);
  }
  return {{"n", n},
          {"u_n", u_n},
          {"u_stderr", u_se},
          {"trials", t},
          {"min_estimate", min_estimate},
          {"argmin", argmin},
          {"nu_star_within_3se", nu_star_within},
          {"pass", pass}};
}

SandwichReport dual_sandwich(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                             const std::vector<double>& a, double n, const std::vector<TrialControl>& trials,
                             long n_paths, uint64_t seed, double u_n, double u_se, const DualOptions& opt) {
  if (trials.empty()) throw ConfigError("at least one control required");
  SandwichReport r;
  r.n = n;
  r.u_n = u_n;
  r.u_se = u_se;
  r.pass = true;
  r.min_estimate = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < trials.size(); ++j) {
    TiltedValueEstimate e = dual_estimate(spec, grid, x, a, trials[j], n, n_paths, seed, opt);
    double band = 3.0 * std::sqrt(e.stderr_ * e.stderr_ + u_se * u_se);
    bool ok = e.estimate >= u_n - band;
    r.above.push_back(ok);
    r.pass = r.pass && ok;
    if (e.estimate < r.min_estimate) {
      r.min_estimate = e.estimate;
      r.argmin = e.nu;
    }
    if (trials[j].label == "nu_star") {
      r.nu_star_index = static_cast<int>(j);
      r.nu_star_within = std::abs(e.estimate - u_n) <= band;
      r.pass = r.pass && r.nu_star_within;
    }
    r.trials.push_back(std::move(e));
  }
  return r;
}

}  // namespace vhj
