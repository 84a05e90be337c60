#pragma once
#include <string>
#include <vector>

#include "bsde.hpp"
#include "dual.hpp"
#include "oracles.hpp"
#include "problem.hpp"

namespace vhj {

inline constexpr int kReportSchema = 1;

enum ExitCode { kExitOk = 0, kExitError = 1, kExitAssumption = 2, kExitVerdict = 3 };

struct EvalPoint {
  std::vector<double> x, a;
};

struct DualConfig {
  double n = 16;
  std::vector<std::string> trials{"zero", "plus", "minus", "nu_star"};
  long n_paths = 0;   // 0: same as mc.n_paths
  uint64_t seed = 0;  // 0: mc.seed + 1
  int bins_x = 48, bins_i = 48;
  std::string mode = "drift";
};

struct ExperimentConfig {
  std::string problem = "kpz";
  json params = json::object();
  std::string custom_path;
  json custom;  // inline custom problem
  std::string preset;
  double t = 0.0;
  double T = 0.0;  // 0: problem default
  int steps = 50;
  long n_paths = 100000;
  uint64_t seed = 12345;
  bool antithetic = false;
  RegressionConfig reg;
  std::vector<double> schedule{1, 2, 4, 8, 16, 32, 64};
  double tol_u = 1e-2;
  double tol_K = 0.0;
  bool early_stop = false;
  std::vector<EvalPoint> points;  // empty: problem defaults
  std::string oracle = "auto";
  double oracle_abs = 0.05, oracle_rel = 0.05;
  FDGrid1D fd;
  std::vector<std::string> stages{"validate", "forward", "ladder", "dual", "oracle"};
  DualConfig dual;
  std::string out = "out";
  bool dump_paths = false;

  json to_json() const;
  // Values in j override base. Field errors name the offending key.
  static ExperimentConfig from_json(const json& j, ExperimentConfig base);
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig from_file(const std::string& path, ExperimentConfig base);
  static ExperimentConfig from_file(const std::string& path);
};

// smoke, acceptance, deep
ExperimentConfig apply_preset(ExperimentConfig c, const std::string& name);

struct RunResult {
  int exit_code = 0;
  std::string message;
  json report;
  std::string summary_csv;
  json timing;
};

ProblemSpec build_problem(const ExperimentConfig& c);

// Runs the enabled stages; writes report.json, summary.csv and timing.json
// to c.out when write_files is set.
RunResult run_experiment(const ExperimentConfig& c, bool write_files = true);

// Per-metric deltas between two reports; throws ConfigError on schema mismatch.
json compare_reports(const json& a, const json& b);

}  // namespace vhj
