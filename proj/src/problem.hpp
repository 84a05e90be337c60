#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace vhj {

using json = nlohmann::json;

// Error categories. The C API maps these onto status codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StructuralError : Error {
  using Error::Error;
};
struct AssumptionError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

struct GrowthProfile {
  double p_rho = 0.0;
  double p = 2.0;
  double q = 2.0;
  double p_F = 0.0, q_F = 0.0;
  double p_g = 0.0, q_g = 0.0;
  double m_F = 1.0, M_F = 1.0;
  double m_g = 0.0, M_g = 0.0;
  double L_F = 0.0;
  double M_rho = 1.0;
  double L_coef = 0.0;

  double p_conj() const { return p / (p - 1.0); }
  double q_conj() const { return q / (q - 1.0); }
  // exponent of |x| in the growth bound of u
  double x_exponent() const;
  // exponent of |a| in the a-priori bound of the penalized solutions (p_rho < 1)
  double a_exponent() const;
};

json to_json(const GrowthProfile& g);
GrowthProfile growth_from_json(const json& j, GrowthProfile base = {});

// All hot-path callbacks take raw pointers of length dim (matrices row-major dim*dim).
struct ProblemSpec {
  std::string name;
  int dim = 1;
  double T = 1.0;
  std::function<void(const double* x, double* out)> b;
  std::function<void(const double* x, double* out)> sigma;
  std::function<void(const double* x, double* out)> rho;
  std::function<double(const double* x, double y, const double* z)> F;
  std::function<double(const double* x)> g;
  GrowthProfile growth;
  // f(x, a, y) when known in closed form
  std::function<double(const double* x, const double* a, double y)> f_closed;
  json params = json::object();
};

struct ConjugateConfig {
  int grid_points = 201;
  int refine_iters = 4;
  double tol = 1e-12;
  double margin = 1.0;
};

struct Finding {
  std::string check;
  bool pass = true;
  std::string detail;
};

struct ValidationReport {
  bool pass = true;
  bool structural_error = false;
  std::vector<Finding> findings;
  json to_json() const;
};

struct ValidationOptions {
  int sample_count = 500;
  double box = 3.0;
  uint64_t seed = 7;
  double rel_tol = 1e-6;
};

ValidationReport validate(const ProblemSpec& spec, const ValidationOptions& opt = {});

// Exponent rules of the growth profile only (no function sampling).
std::vector<Finding> check_growth_rules(const GrowthProfile& g);

double search_radius(const ProblemSpec& spec, const ConjugateConfig& cfg, const double* a);

struct ConjugateResult {
  double value = 0.0;
  std::vector<double> argmin;
};

// Numeric conjugate, ignoring any closed form.
ConjugateResult conjugate_numeric(const ProblemSpec& spec, const ConjugateConfig& cfg, const double* x,
                                  const double* a, double y);

// Closed form when present, numeric otherwise.
double conjugate(const ProblemSpec& spec, const ConjugateConfig& cfg, const double* x, const double* a,
                 double y);

struct CrosscheckReport {
  double max_discrepancy = 0.0;
  bool lipschitz_ok = true;
  bool growth_ok = true;
  std::string first_violation;
  int samples = 0;
  json to_json() const;
};

// Throws AssumptionError on a Lipschitz or growth violation.
CrosscheckReport conjugate_crosscheck(const ProblemSpec& spec, const ConjugateConfig& cfg, int sample_count,
                                      uint64_t seed, double box = 2.0);

// Evaluator used by the solvers: closed form if any, numeric otherwise.
std::function<double(const double*, const double*, double)> make_generator(const ProblemSpec& spec,
                                                                          ConjugateConfig cfg = {});

// Registry: kpz, lq, power_utility, exp_utility, custom.
ProblemSpec make_problem(const std::string& name, const json& params = json::object());
ProblemSpec load_custom_problem(const json& j);
std::vector<std::string> registry_names();

}  // namespace vhj
