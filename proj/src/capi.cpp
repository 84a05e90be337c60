#include "vhj/vhj.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "bsde.hpp"
#include "experiment.hpp"
#include "forward.hpp"
#include "oracles.hpp"
#include "problem.hpp"

struct vhj_problem {
  vhj::ProblemSpec spec;
};
struct vhj_paths {
  vhj::PathBundle bundle;
};
struct vhj_ladder {
  vhj::LadderReport report;
};

namespace {

thread_local std::string g_error;

vhj_status fail(vhj_status s, const std::string& msg) {
  g_error = msg;
  return s;
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <class Fn>
vhj_status guard(Fn&& fn) {
  try {
    g_error.clear();
    return fn();
  } catch (const vhj::ConfigError& e) {
    return fail(VHJ_ERR_CONFIG, e.what());
  } catch (const vhj::StructuralError& e) {
    return fail(VHJ_ERR_STRUCTURAL, e.what());
  } catch (const vhj::AssumptionError& e) {
    return fail(VHJ_ERR_ASSUMPTION, e.what());
  } catch (const vhj::NumericalError& e) {
    return fail(VHJ_ERR_NUMERICAL, e.what());
  } catch (const vhj::json::exception& e) {
    return fail(VHJ_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(VHJ_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VHJ_ERR_INTERNAL, "unknown error");
  }
}

vhj::json parse_or_empty(const char* s) {
  if (!s || !*s) return vhj::json::object();
  return vhj::json::parse(s);
}

}  // namespace

extern "C" {

const char* vhj_version(void) { return "1.0.0"; }

const char* vhj_last_error(void) { return g_error.c_str(); }

void vhj_string_free(char* s) { std::free(s); }

vhj_status vhj_problem_create(const char* name, const char* params_json, vhj_problem** out) {
  if (!name || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    auto* p = new vhj_problem{vhj::make_problem(name, parse_or_empty(params_json))};
    *out = p;
    return VHJ_OK;
  });
}

vhj_status vhj_problem_from_file(const char* path, vhj_problem** out) {
  if (!path || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    std::ifstream in(path);
    if (!in) throw vhj::ConfigError(std::string("cannot open '") + path + "'");
    vhj::json j = vhj::json::parse(in);
    *out = new vhj_problem{vhj::load_custom_problem(j)};
    return VHJ_OK;
  });
}

void vhj_problem_free(vhj_problem* p) { delete p; }

vhj_status vhj_problem_dim(const vhj_problem* p, int* dim) {
  if (!p || !dim) return fail(VHJ_ERR_ARGUMENT, "null argument");
  *dim = p->spec.dim;
  return VHJ_OK;
}

vhj_status vhj_problem_horizon(const vhj_problem* p, double* T) {
  if (!p || !T) return fail(VHJ_ERR_ARGUMENT, "null argument");
  *T = p->spec.T;
  return VHJ_OK;
}

vhj_status vhj_problem_validate(const vhj_problem* p, int* pass, char** report_json) {
  if (!p || !pass) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    vhj::ValidationReport r = vhj::validate(p->spec);
    *pass = r.pass ? 1 : 0;
    if (report_json) *report_json = dup(r.to_json().dump(2));
    return VHJ_OK;
  });
}

vhj_status vhj_conjugate(const vhj_problem* p, const double* x, const double* a, double y, double* out) {
  if (!p || !x || !a || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    *out = vhj::conjugate(p->spec, vhj::ConjugateConfig{}, x, a, y);
    return VHJ_OK;
  });
}

vhj_status vhj_paths_simulate(const vhj_problem* p, int steps, const double* x, const double* a, long n_paths,
                              uint64_t seed, int antithetic, vhj_paths** out) {
  if (!p || !x || !a || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    const int d = p->spec.dim;
    vhj::TimeGrid g{0.0, p->spec.T, steps};
    vhj::SimOptions so;
    so.antithetic = antithetic != 0;
    *out = new vhj_paths{vhj::simulate(p->spec, g, std::vector<double>(x, x + d), std::vector<double>(a, a + d),
                                       n_paths, seed, so)};
    return VHJ_OK;
  });
}

vhj_status vhj_paths_load(const char* path, vhj_paths** out) {
  if (!path || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    *out = new vhj_paths{vhj::load_bundle(path)};
    return VHJ_OK;
  });
}

vhj_status vhj_paths_dump(const vhj_paths* b, const char* path) {
  if (!b || !path) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    vhj::dump_bundle(b->bundle, path);
    return VHJ_OK;
  });
}

vhj_status vhj_paths_info(const vhj_paths* b, long* n_paths, int* steps, int* dim) {
  if (!b) return fail(VHJ_ERR_ARGUMENT, "null argument");
  if (n_paths) *n_paths = b->bundle.n_paths;
  if (steps) *steps = b->bundle.steps;
  if (dim) *dim = b->bundle.dim;
  return VHJ_OK;
}

vhj_status vhj_paths_state(const vhj_paths* b, long path, int k, double* x, double* i) {
  if (!b) return fail(VHJ_ERR_ARGUMENT, "null argument");
  const auto& B = b->bundle;
  if (path < 0 || path >= B.n_paths || k < 0 || k > B.steps) return fail(VHJ_ERR_ARGUMENT, "path or step out of range");
  for (int j = 0; j < B.dim; ++j) {
    if (x) x[j] = B.x(path, k)[j];
    if (i) i[j] = B.i(path, k)[j];
  }
  return VHJ_OK;
}

void vhj_paths_free(vhj_paths* b) { delete b; }

vhj_status vhj_ladder_run(const vhj_problem* p, int steps, const double* x, const double* a, long n_paths,
                          uint64_t seed, const double* schedule, size_t n_levels, const char* regression_json,
                          vhj_ladder** out) {
  if (!p || !x || !a || !schedule || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    const int d = p->spec.dim;
    vhj::TimeGrid g{0.0, p->spec.T, steps};
    vhj::json rj = parse_or_empty(regression_json);
    vhj::RegressionConfig reg = vhj::RegressionConfig::from_json(rj);
    *out = new vhj_ladder{vhj::run_ladder(p->spec, g, std::vector<double>(x, x + d), std::vector<double>(a, a + d),
                                          n_paths, seed, std::vector<double>(schedule, schedule + n_levels), reg)};
    return VHJ_OK;
  });
}

vhj_status vhj_ladder_u(const vhj_ladder* l, double* u, double* stderr_u) {
  if (!l) return fail(VHJ_ERR_ARGUMENT, "null argument");
  if (u) *u = l->report.final_u;
  if (stderr_u) *stderr_u = l->report.final_se;
  return VHJ_OK;
}

vhj_status vhj_ladder_levels(const vhj_ladder* l, size_t* n_levels) {
  if (!l || !n_levels) return fail(VHJ_ERR_ARGUMENT, "null argument");
  *n_levels = l->report.levels.size();
  return VHJ_OK;
}

vhj_status vhj_ladder_level(const vhj_ladder* l, size_t level, double* n, double* u, double* stderr_u,
                            double* constraint_mass) {
  if (!l) return fail(VHJ_ERR_ARGUMENT, "null argument");
  if (level >= l->report.levels.size()) return fail(VHJ_ERR_ARGUMENT, "level out of range");
  const auto& v = l->report.levels[level];
  if (n) *n = v.n;
  if (u) *u = v.u;
  if (stderr_u) *stderr_u = v.se;
  if (constraint_mass) *constraint_mass = v.constraint_mass;
  return VHJ_OK;
}

vhj_status vhj_ladder_monotone(const vhj_ladder* l, int* monotone) {
  if (!l || !monotone) return fail(VHJ_ERR_ARGUMENT, "null argument");
  *monotone = l->report.monotone ? 1 : 0;
  return VHJ_OK;
}

vhj_status vhj_ladder_to_json(const vhj_ladder* l, char** out) {
  if (!l || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    *out = dup(l->report.to_json().dump(2));
    return VHJ_OK;
  });
}

void vhj_ladder_free(vhj_ladder* l) { delete l; }

vhj_status vhj_oracle_value(const vhj_problem* p, const char* kind, double t, const double* x, double* out) {
  if (!p || !kind || !x || !out) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    const auto& s = p->spec;
    std::vector<double> xv(x, x + s.dim);
    std::string k = kind;
    if (k == "cole_hopf") {
      if (s.name != "kpz") throw vhj::ConfigError("cole_hopf oracle needs the kpz problem");
      *out = vhj::cole_hopf_kpz(s.params.at("lambda").get<double>(), s.g, s.dim, t, s.T, xv);
    } else if (k == "riccati") {
      if (s.name != "lq") throw vhj::ConfigError("riccati oracle needs the lq problem");
      *out = vhj::riccati_lq(vhj::LQMatrices::from_params(s.params)).value(t, xv);
    } else if (k == "fd") {
      vhj::ProblemSpec sh = s;
      sh.T = s.T - t;
      vhj::FDGrid1D fd;
      fd.x_min = xv.at(0) - 3.0;
      fd.x_max = xv.at(0) + 3.0;
      *out = vhj::fd_hjb_1d(sh, fd).value(xv[0]);
    } else {
      throw vhj::ConfigError("unknown oracle '" + k + "' (cole_hopf, riccati, fd)");
    }
    return VHJ_OK;
  });
}

vhj_status vhj_experiment_run(const char* preset, const char* config_json, const char* overrides_json,
                              int* exit_code, char** report_json) {
  if (!exit_code) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    vhj::ExperimentConfig c;
    if (preset && *preset) c = vhj::apply_preset(c, preset);
    if (config_json && *config_json) {
      vhj::json j;
      try {
        j = vhj::json::parse(config_json);
      } catch (const vhj::json::parse_error& e) {
        throw vhj::ConfigError(std::string("config parse error: ") + e.what());
      }
      c = vhj::ExperimentConfig::from_json(j, c);
    }
    if (overrides_json && *overrides_json) c = vhj::ExperimentConfig::from_json(vhj::json::parse(overrides_json), c);
    vhj::RunResult r = vhj::run_experiment(c, true);
    *exit_code = r.exit_code;
    if (r.exit_code == vhj::kExitError) g_error = r.message;
    if (report_json) *report_json = dup(r.report.dump(2));
    return VHJ_OK;
  });
}

vhj_status vhj_compare(const char* a, const char* b, char** diff_json) {
  if (!a || !b || !diff_json) return fail(VHJ_ERR_ARGUMENT, "null argument");
  return guard([&] {
    vhj::json ja = vhj::json::parse(a), jb = vhj::json::parse(b);
    *diff_json = dup(vhj::compare_reports(ja, jb).dump(2));
    return VHJ_OK;
  });
}

}  // extern "C"
