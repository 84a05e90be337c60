#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "problem.hpp"

namespace vhj {

struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  int steps = 50;
  double dt() const { return (t_end - t_start) / steps; }
  double t(int k) const { return t_start + k * dt(); }
  void check(double horizon) const;
};

struct PathBundle {
  long n_paths = 0;
  int steps = 0;
  int dim = 1;
  TimeGrid grid;
  uint64_t seed = 0;
  bool antithetic = false;
  std::vector<double> x0, a0;
  // [path][step][component], X and I carry steps+1 nodes, increments carry steps
  std::vector<double> X, I, dW, dB;
  // effective tilt nu*dt added to I before each step; empty when untilted
  std::vector<double> shift;
  std::vector<uint8_t> blown;
  long n_blown = 0;

  std::size_t node(long p, int k) const { return (static_cast<std::size_t>(p) * (steps + 1) + k) * dim; }
  std::size_t incr(long p, int k) const { return (static_cast<std::size_t>(p) * steps + k) * dim; }
  const double* x(long p, int k) const { return X.data() + node(p, k); }
  const double* i(long p, int k) const { return I.data() + node(p, k); }
};

struct SimOptions {
  bool antithetic = false;
  double blowup_level = 1e12;
  double blowup_fraction = 1e-3;
};

// Euler for X, exact Brownian I. Draws come from a counter RNG keyed by
// (seed, path, step, component) so the bundle does not depend on threading.
PathBundle simulate(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                    const std::vector<double>& a, long n_paths, uint64_t seed, const SimOptions& opt = {});

// Feedback tilt nu(k, t, X_k, I_k, out). The tilt shifts I by nu*dt at the start
// of the step, so both the drift of X over the step and I_{k+1} see it.
using TiltFn = std::function<void(int k, double t, const double* x, const double* i, double* out)>;

PathBundle simulate_tilted(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                           const std::vector<double>& a, long n_paths, uint64_t seed, const TiltFn& nu,
                           double n_bound, const SimOptions& opt = {});

struct MomentReport {
  double m = 2;
  double sup_moment_X = 0;
  double moment_I = 0;
  double integrated_I = 0;
  double exp_factor = 1;
  double C = 0;
  bool pass = false;
  json to_json() const;
};

MomentReport moment_diagnostics(const PathBundle& b, const ProblemSpec& spec, double m);

void dump_bundle(const PathBundle& b, const std::string& path);
PathBundle load_bundle(const std::string& path);

// Standard error of a per-path sample, using pair means for antithetic bundles.
struct MeanSe {
  double mean = 0;
  double se = 0;
};
MeanSe mean_se(const std::vector<double>& v, bool antithetic);

}  // namespace vhj
