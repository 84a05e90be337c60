#pragma once
#include <memory>
#include <string>
#include <vector>

#include "forward.hpp"
#include "problem.hpp"

namespace vhj {

enum class BasisKind { Spline, Polynomial, Cells };

struct RegressionConfig {
  // Spline: tensor cubic B-splines in (x, i), conditional expectations by
  // Gauss-Hermite quadrature of the fitted next-step function (d = 1 only).
  // Polynomial / Cells: regression of Y_{k+1} on features of (X_k, I_k).
  BasisKind kind = BasisKind::Spline;
  int spline_x = 12;
  int spline_i = 12;
  double smoothing = 1e-4;
  int quad_x = 6;
  int quad_i = 6;
  int degree = 3;
  int resolution = 6;
  double ridge = 1e-8;
  double clip = 0.005;
  int picard_iters = 2;
  int shift_grid = 33;

  json to_json() const;
  static RegressionConfig from_json(const json& j);
};

struct BackwardSolution {
  double n = 0;
  long n_paths = 0;
  int steps = 0;
  int dim = 1;
  std::vector<double> Y;     // [path][steps+1]
  std::vector<double> Z;     // [path][step][dim]
  std::vector<double> V;     // [path][step][dim]
  std::vector<double> dK;    // [path][step]
  std::vector<double> tilt;  // optimal shift of I divided by dt, [path][step][dim]
  double u = 0;
  double u_se = 0;
  double pathwise_mean = 0;
  double constraint_mass = 0;
  double constraint_se = 0;
  double K_mean = 0;
  double max_residual = 0;
  std::vector<std::string> warnings;

  double y(long p, int k) const { return Y[static_cast<std::size_t>(p) * (steps + 1) + k]; }
};

class PenalizedSolver {
 public:
  PenalizedSolver(const ProblemSpec& spec, const PathBundle& bundle, const RegressionConfig& reg);
  ~PenalizedSolver();
  BackwardSolution solve(double n) const;
  const RegressionConfig& config() const { return reg_; }
  const std::vector<std::string>& warnings() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  RegressionConfig reg_;
};

BackwardSolution solve_penalized(const ProblemSpec& spec, const PathBundle& bundle, double n,
                                 const RegressionConfig& reg);

struct LevelSummary {
  double n = 0;
  double u = 0;
  double se = 0;
  double constraint_mass = 0;
  double constraint_se = 0;
  double K_mean = 0;
  double pathwise_mean = 0;
  double seconds = 0;
};

struct LadderOptions {
  bool antithetic = false;
  double tol_u = 1e-2;
  double tol_K = 0.0;
  bool early_stop = false;
  int keep_level = -1;  // index of the level whose full solution is kept
};

struct LadderReport {
  std::vector<double> schedule;
  std::vector<LevelSummary> levels;
  bool monotone = true;
  std::vector<std::string> monotone_violations;
  bool constraint_decay = true;
  bool converged = false;
  double final_u = 0;
  double final_se = 0;
  double tol_u = 0;
  long n_paths = 0;
  int steps = 0;
  uint64_t seed = 0;
  std::vector<double> x, a;
  double t = 0;
  RegressionConfig reg;
  std::vector<std::string> warnings;

  // seconds per level are left out unless asked for, so reports stay reproducible
  json to_json(bool timing = false) const;
  std::string to_csv() const;
};

// Verdicts of a finished ladder (used by run_ladder and when re-reading reports).
void ladder_verdicts(LadderReport& r);

LadderReport run_ladder(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                        const std::vector<double>& a, long n_paths, uint64_t seed, const std::vector<double>& schedule,
                        const RegressionConfig& reg, const LadderOptions& opt = {},
                        BackwardSolution* kept = nullptr, PathBundle* bundle_out = nullptr);

struct AIndependence {
  std::vector<std::vector<double>> a_list;
  std::vector<double> u, se;
  double max_discrepancy = 0;
  double combined_se = 0;
  bool within = false;
  std::vector<LadderReport> ladders;
  json to_json() const;
};

AIndependence check_a_independence(const ProblemSpec& spec, const TimeGrid& grid, const std::vector<double>& x,
                                   const std::vector<std::vector<double>>& a_list, long n_paths,
                                   const std::vector<uint64_t>& seed_list, const std::vector<double>& schedule,
                                   const RegressionConfig& reg, const LadderOptions& opt = {});

struct GrowthPoint {
  std::vector<double> x, a;
  const LadderReport* report = nullptr;
};

struct GrowthCheck {
  double x_exponent = 0;
  double a_exponent = 0;
  std::vector<double> schedule;
  std::vector<double> C_fit;  // per level
  double ratio = 0;
  bool stable = false;
  bool pass = false;
  json to_json() const;
};

GrowthCheck check_growth_bound(const std::vector<GrowthPoint>& points, const ProblemSpec& spec,
                               double stability_factor = 2.0);

}  // namespace vhj
