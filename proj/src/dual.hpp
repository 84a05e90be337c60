#pragma once
#include <memory>
#include <string>
#include <vector>

#include "bsde.hpp"
#include "forward.hpp"
#include "problem.hpp"

namespace vhj {

// Piecewise-constant feedback field over (step, X bin, I bin), bins taken from
// per-step quantiles of the first components of X and I.
struct BinnedField {
  int steps = 0;
  int dim = 1;
  int bins_x = 48;
  int bins_i = 48;
  double bound = 0;  // norm cap, 0 means none
  std::vector<std::vector<double>> x_edges, i_edges;  // per step, interior edges
  std::vector<double> values;                         // [step][bx][bi][dim]
  std::vector<double> counts;                         // [step][bx][bi]
  long empty_bins = 0;

  void eval(int k, const double* x, const double* i, double* out) const;
  json to_json() const;
  static BinnedField from_json(const json& j);
};

using NuTable = BinnedField;

// Average field[p][k][dim] over paths falling in each bin. Empty bins get zero.
BinnedField bin_field(const PathBundle& bundle, const std::vector<double>& field, int dim, int bins_x, int bins_i,
                      double bound = 0);

struct GammaPath {
  long n_paths = 0;
  int steps = 0;
  std::vector<double> gamma;     // [path][step]
  std::vector<double> discount;  // [path][step+1], exp of the integrated gamma
  long clamped = 0;
  double clamp_rate = 0;
  double max_abs = 0;
  std::vector<std::string> warnings;
};

GammaPath gamma_process(const ProblemSpec& spec, const PathBundle& bundle, const BackwardSolution& sol);

// Optimal tilt of a solved level as a binned feedback control, |nu| <= n.
NuTable nu_star(const BackwardSolution& sol, const PathBundle& bundle, double n, int bins_x = 48, int bins_i = 48);

struct TrialControl {
  std::string label;
  std::vector<double> constant;
  std::shared_ptr<const NuTable> table;

  static TrialControl fixed(std::string label, std::vector<double> v);
  static TrialControl feedback(std::string label, std::shared_ptr<const NuTable> t);
  void eval(int k, const double* x, const double* i, double* out) const;
};

enum class MeasureMode { Drift, Weighting };

struct DualOptions {
  MeasureMode mode = MeasureMode::Drift;
  bool antithetic = false;
  // frozen discount rate for y-dependent generators; null means gamma = 0
  std::shared_ptr<const BinnedField> gamma;
};

struct TiltedValueEstimate {
  std::string nu;
  double n_bound = 0;
  double estimate = 0;
  double stderr_ = 0;
  long n_paths = 0;
  uint64_t seed = 0;
  json to_json() const;
};

// Discounted running cost f(X, I + shift, 0) plus discounted g(X_T) along a bundle.
std::vector<double> path_functional(const ProblemSpec& spec, const PathBundle& bundle, const BinnedField* gamma);

TiltedValueEstimate dual_estimate(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                                  const std::vector<double>& a, const TrialControl& nu, double n_bound, long n_paths,
                                  uint64_t seed, const DualOptions& opt = {});

struct SandwichReport {
  double n = 0;
  double u_n = 0;
  double u_se = 0;
  std::vector<TiltedValueEstimate> trials;
  std::vector<bool> above;
  double min_estimate = 0;
  std::string argmin;
  int nu_star_index = -1;
  bool nu_star_within = true;
  bool pass = false;
  json to_json() const;
};

// Trials labelled "nu_star" are held to the two-sided band.
SandwichReport dual_sandwich(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                             const std::vector<double>& a, double n, const std::vector<TrialControl>& trials,
                             long n_paths, uint64_t seed, double u_n, double u_se, const DualOptions& opt = {});

}  // namespace vhj
