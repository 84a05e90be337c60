#include "experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace vhj {

namespace fs = std::filesystem;

namespace {

template <class T>
void get(const json& j, const char* key, const std::string& path, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + path + key + "': " + e.what());
  }
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config field '" + path + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown config field '" + path + it.key() + "'");
  }
}

const std::set<std::string> kStages{"validate", "forward", "ladder", "dual", "oracle"};
const std::set<std::string> kOracles{"auto", "cole_hopf", "riccati", "fd", "none"};

bool has_stage(const ExperimentConfig& c, const std::string& s) {
  return std::find(c.stages.begin(), c.stages.end(), s) != c.stages.end();
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

json ExperimentConfig::to_json() const {
  json pts = json::array();
  for (auto& p : points) pts.push_back({{"x", p.x}, {"a", p.a}});
  json j = {{"problem", problem},
            {"params", params},
            {"preset", preset},
            {"grid", {{"t", t}, {"steps", steps}}},
            {"mc", {{"n_paths", n_paths}, {"seed", seed}, {"antithetic", antithetic}}},
            {"regression", reg.to_json()},
            {"schedule", schedule},
            {"tol_u", tol_u},
            {"tol_K", tol_K},
            {"early_stop", early_stop},
            {"points", pts},
            {"oracle", oracle},
            {"oracle_tol", {{"abs", oracle_abs}, {"rel", oracle_rel}}},
            {"fd", {{"x_min", fd.x_min}, {"x_max", fd.x_max}, {"nx", fd.nx}, {"a_max", fd.a_max}, {"na", fd.na}, {"nt", fd.nt}}},
            {"stages", stages},
            {"dual",
             {{"n", dual.n},
              {"trials", dual.trials},
              {"n_paths", dual.n_paths},
              {"seed", dual.seed},
              {"bins_x", dual.bins_x},
              {"bins_i", dual.bins_i},
              {"mode", dual.mode}}},
            {"out", out},
            {"dump_paths", dump_paths}};
  if (T > 0) j["grid"]["T"] = T;
  if (!custom_path.empty()) j["custom_path"] = custom_path;
  if (!custom.is_null()) j["custom"] = custom;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, ExperimentConfig c) {
  check_keys(j, "", {"problem", "params", "custom_path", "custom", "preset", "grid", "mc", "regression", "schedule",
                     "tol_u", "tol_K", "early_stop", "points", "oracle", "oracle_tol", "fd", "stages", "dual", "out",
                     "dump_paths"});
  std::string preset;
  get(j, "preset", "", preset);
  if (!preset.empty()) c = apply_preset(c, preset);
  get(j, "problem", "", c.problem);
  get(j, "params", "", c.params);
  get(j, "custom_path", "", c.custom_path);
  if (j.contains("custom")) c.custom = j.at("custom");
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, "grid.", {"t", "T", "steps"});
    get(g, "t", "grid.", c.t);
    if (g.contains("T")) {
      get(g, "T", "grid.", c.T);
      if (!(c.T > 0)) throw ConfigError("config field 'grid.T': horizon must be positive");
    }
    get(g, "steps", "grid.", c.steps);
  }
  if (j.contains("mc")) {
    const json& m = j.at("mc");
    check_keys(m, "mc.", {"n_paths", "seed", "antithetic"});
    get(m, "n_paths", "mc.", c.n_paths);
    get(m, "seed", "mc.", c.seed);
    get(m, "antithetic", "mc.", c.antithetic);
  }
  if (j.contains("regression")) {
    try {
      json merged = c.reg.to_json();
      merged.update(j.at("regression"));
      c.reg = RegressionConfig::from_json(merged);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config field 'regression': ") + e.what());
    }
  }
  get(j, "schedule", "", c.schedule);
  get(j, "tol_u", "", c.tol_u);
  get(j, "tol_K", "", c.tol_K);
  get(j, "early_stop", "", c.early_stop);
  if (j.contains("points")) {
    c.points.clear();
    const json& ps = j.at("points");
    if (!ps.is_array()) throw ConfigError("config field 'points' must be an array");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      std::string path = "points[" + std::to_string(k) + "].";
      check_keys(ps[k], path, {"x", "a"});
      EvalPoint p;
      get(ps[k], "x", path, p.x);
      get(ps[k], "a", path, p.a);
      if (p.x.empty()) throw ConfigError("config field '" + path + "x' is required");
      if (p.a.empty()) p.a.assign(p.x.size(), 0.0);
      c.points.push_back(p);
    }
  }
  get(j, "oracle", "", c.oracle);
  if (j.contains("oracle_tol")) {
    check_keys(j.at("oracle_tol"), "oracle_tol.", {"abs", "rel"});
    get(j.at("oracle_tol"), "abs", "oracle_tol.", c.oracle_abs);
    get(j.at("oracle_tol"), "rel", "oracle_tol.", c.oracle_rel);
  }
  if (j.contains("fd")) {
    const json& f = j.at("fd");
    check_keys(f, "fd.", {"x_min", "x_max", "nx", "a_max", "na", "nt"});
    get(f, "x_min", "fd.", c.fd.x_min);
    get(f, "x_max", "fd.", c.fd.x_max);
    get(f, "nx", "fd.", c.fd.nx);
    get(f, "a_max", "fd.", c.fd.a_max);
    get(f, "na", "fd.", c.fd.na);
    get(f, "nt", "fd.", c.fd.nt);
  }
  get(j, "stages", "", c.stages);
  if (j.contains("dual")) {
    const json& d = j.at("dual");
    check_keys(d, "dual.", {"n", "trials", "n_paths", "seed", "bins_x", "bins_i", "mode"});
    get(d, "n", "dual.", c.dual.n);
    get(d, "trials", "dual.", c.dual.trials);
    get(d, "n_paths", "dual.", c.dual.n_paths);
    get(d, "seed", "dual.", c.dual.seed);
    get(d, "bins_x", "dual.", c.dual.bins_x);
    get(d, "bins_i", "dual.", c.dual.bins_i);
    get(d, "mode", "dual.", c.dual.mode);
  }
  get(j, "out", "", c.out);
  get(j, "dump_paths", "", c.dump_paths);

  if (c.steps < 1) throw ConfigError("config field 'grid.steps' must be at least 1");
  if (c.t < 0) throw ConfigError("config field 'grid.t' must be nonnegative");
  if (c.n_paths < 1) throw ConfigError("config field 'mc.n_paths' must be positive");
  if ((c.preset == "acceptance" || c.preset == "deep") && c.n_paths < 1000)
    throw ConfigError("config field 'mc.n_paths': acceptance-mode runs need at least 1000 paths");
  if (c.schedule.empty()) throw ConfigError("config field 'schedule' must not be empty");
  for (std::size_t k = 0; k < c.schedule.size(); ++k) {
    if (!(c.schedule[k] >= 0)) throw ConfigError("config field 'schedule' must hold nonnegative levels");
    if (k > 0 && !(c.schedule[k] > c.schedule[k - 1]))
      throw ConfigError("config field 'schedule' must be strictly increasing");
  }
  for (auto& s : c.stages)
    if (!kStages.count(s)) throw ConfigError("config field 'stages': unknown stage '" + s + "'");
  if (!kOracles.count(c.oracle)) throw ConfigError("config field 'oracle': unknown oracle '" + c.oracle + "'");
  if (c.dual.mode != "drift" && c.dual.mode != "weighting")
    throw ConfigError("config field 'dual.mode' must be drift or weighting");
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
  return from_json(j, base);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) { return from_json(j, ExperimentConfig{}); }

ExperimentConfig ExperimentConfig::from_file(const std::string& path) { return from_file(path, ExperimentConfig{}); }

ExperimentConfig apply_preset(ExperimentConfig c, const std::string& name) {
  if (name == "smoke") {
    c.n_paths = 1000;
    c.steps = 20;
  } else if (name == "acceptance") {
    c.n_paths = 100000;
    c.steps = 50;
  } else if (name == "deep") {
    c.n_paths = 1000000;
    c.steps = 100;
  } else {
    throw ConfigError("unknown preset '" + name + "' (smoke, acceptance, deep)");
  }
  c.preset = name;
  return c;
}

ProblemSpec build_problem(const ExperimentConfig& c) {
  json cj;
  if (!c.custom_path.empty()) {
    std::ifstream in(c.custom_path);
    if (!in) throw ConfigError("cannot open custom problem '" + c.custom_path + "'");
    try {
      cj = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("custom problem parse error in '" + c.custom_path + "': " + e.what());
    }
  } else if (!c.custom.is_null()) {
    cj = c.custom;
  }
  if (!cj.is_null()) {
    if (c.T > 0) cj["T"] = c.T;
    return load_custom_problem(cj);
  }
  json p = c.params;
  if (c.T > 0) p["T"] = c.T;
  return make_problem(c.problem, p);
}

namespace {

ExperimentConfig materialize(ExperimentConfig c, const ProblemSpec& spec) {
  c.T = spec.T;
  if (c.points.empty()) {
    std::vector<double> zero(spec.dim, 0.0);
    if (spec.name == "lq") {
      for (double v : {0.0, 0.5, 1.0}) {
        std::vector<double> x = zero;
        x[0] = v;
        c.points.push_back({x, zero});
      }
    } else {
      c.points.push_back({zero, zero});
    }
  }
  for (auto& p : c.points)
    if (static_cast<int>(p.x.size()) != spec.dim || static_cast<int>(p.a.size()) != spec.dim)
      throw ConfigError("evaluation point dimension does not match problem dim");
  if (!(c.t < spec.T)) throw ConfigError("config field 'grid.t' must lie before the horizon");
  if (c.dual.n_paths == 0) c.dual.n_paths = c.n_paths;
  if (c.dual.seed == 0) c.dual.seed = c.seed + 1;
  if (c.oracle == "auto") {
    if (spec.name == "kpz") c.oracle = "cole_hopf";
    else if (spec.name == "lq") c.oracle = "riccati";
    else if (spec.dim == 1) c.oracle = "fd";
    else c.oracle = "none";
  }
  return c;
}

// Spec with the horizon shortened to T - t; coefficients are time-homogeneous.
ProblemSpec shifted(const ProblemSpec& s, double t) {
  ProblemSpec r = s;
  r.T = s.T - t;
  return r;
}

struct OracleValue {
  double value = 0;
  json extra = json::object();
};

OracleValue oracle_value(const ExperimentConfig& c, const ProblemSpec& spec, const EvalPoint& p) {
  OracleValue o;
  if (c.oracle == "cole_hopf") {
    if (spec.name != "kpz") throw ConfigError("cole_hopf oracle needs the kpz problem");
    o.value = cole_hopf_kpz(spec.params.at("lambda").get<double>(), spec.g, spec.dim, c.t, spec.T, p.x);
    if (spec.dim == 1) {
      FDGrid1D fd = c.fd;
      fd.x_min = p.x[0] - 3.0;
      fd.x_max = p.x[0] + 3.0;
      FDResult r = fd_hjb_1d(shifted(spec, c.t), fd);
      double v = r.value(p.x[0]);
      o.extra["fd_crosscheck"] = {{"value", v}, {"diff", std::abs(v - o.value)}, {"tol", 1e-3},
                                  {"pass", std::abs(v - o.value) <= 1e-3}};
    }
  } else if (c.oracle == "riccati") {
    if (spec.name != "lq") throw ConfigError("riccati oracle needs the lq problem");
    RiccatiSolution rs = riccati_lq(LQMatrices::from_params(spec.params));
    o.value = rs.value(c.t, p.x);
    o.extra["max_asymmetry"] = rs.max_asymmetry;
    if (spec.dim == 1) {
      FDGrid1D fd = c.fd;
      fd.x_min = p.x[0] - 3.0;
      fd.x_max = p.x[0] + 3.0;
      FDResult r = fd_hjb_1d(shifted(spec, c.t), fd);
      double v = r.value(p.x[0]);
      o.extra["fd_crosscheck"] = {{"value", v}, {"diff", std::abs(v - o.value)}, {"tol", 1e-2},
                                  {"pass", std::abs(v - o.value) <= 1e-2}};
    }
  } else if (c.oracle == "fd") {
    if (spec.dim != 1) throw ConfigError("fd oracle needs a one-dimensional problem");
    FDGrid1D fd = c.fd;
    fd.x_min = std::min(fd.x_min, p.x[0] - 1.0);
    fd.x_max = std::max(fd.x_max, p.x[0] + 1.0);
    FDResult r = fd_hjb_1d(shifted(spec, c.t), fd);
    o.value = r.value(p.x[0]);
    o.extra = {{"nt", r.nt}, {"a_max", r.a_max}, {"saturated", r.saturated}, {"saturation_delta", r.saturation_delta}};
  }
  return o;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream o(p, std::ios::binary);
  if (!o) throw ConfigError("cannot write '" + p.string() + "'");
  o << s;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& c0, bool write_files) {
  RunResult R;
  json& rep = R.report;
  rep["schema_version"] = kReportSchema;
  rep["timestamp"] = utc_now();
  rep["config"] = c0.to_json();
  json verdicts = json::object();
  R.timing = json::object();
  auto t_all = std::chrono::steady_clock::now();
  std::ostringstream csv;
  csv.precision(10);

  auto finish = [&](int code, const std::string& msg) {
    R.exit_code = code;
    R.message = msg;
    rep["verdicts"] = verdicts;
    rep["exit_code"] = code;
    if (!msg.empty()) rep["message"] = msg;
    R.summary_csv = csv.str();
    R.timing["total_seconds"] = seconds_since(t_all);
    if (write_files) {
      fs::create_directories(c0.out);
      write_text(fs::path(c0.out) / "report.json", rep.dump(2) + "\n");
      write_text(fs::path(c0.out) / "summary.csv", R.summary_csv);
      write_text(fs::path(c0.out) / "timing.json", R.timing.dump(2) + "\n");
    }
    return R;
  };

  try {
    ProblemSpec spec = build_problem(c0);
    ExperimentConfig c = materialize(c0, spec);
    rep["config"] = c.to_json();
    rep["problem"] = {{"name", spec.name}, {"dim", spec.dim}, {"T", spec.T}, {"params", spec.params},
                      {"growth", to_json(spec.growth)}};
    TimeGrid grid{c.t, spec.T, c.steps};
    grid.check(spec.T);

    if (has_stage(c, "validate")) {
      auto t0 = std::chrono::steady_clock::now();
      ValidationReport vr = validate(spec);
      rep["validation"] = vr.to_json();
      if (!vr.pass) return finish(kExitAssumption, "assumption validation failed");
      CrosscheckReport cr = conjugate_crosscheck(spec, ConjugateConfig{}, 100, c.seed);
      rep["conjugate_crosscheck"] = cr.to_json();
      R.timing["validate"] = seconds_since(t0);
    }

    const bool ladder = has_stage(c, "ladder"), dual = has_stage(c, "dual");
    int keep = -1;
    if (dual)
      for (std::size_t k = 0; k < c.schedule.size(); ++k)
        if (c.schedule[k] == c.dual.n) keep = static_cast<int>(k);
    BackwardSolution kept;
    PathBundle bundle0;
    bool have_bundle = false, have_kept = false;
    std::vector<LadderReport> ladders;

    json pts = json::array();
    for (auto& p : c.points) pts.push_back({{"x", p.x}, {"a", p.a}, {"t", c.t}});

    if (ladder) {
      auto t0 = std::chrono::steady_clock::now();
      LadderOptions lo;
      lo.antithetic = c.antithetic;
      lo.tol_u = c.tol_u;
      lo.tol_K = c.tol_K;
      lo.early_stop = c.early_stop;
      json lt = json::array();
      ladders.reserve(c.points.size());
      for (std::size_t j = 0; j < c.points.size(); ++j) {
        lo.keep_level = j == 0 ? keep : -1;
        ladders.push_back(run_ladder(spec, grid, c.points[j].x, c.points[j].a, c.n_paths, c.seed, c.schedule, c.reg,
                                     lo, j == 0 ? &kept : nullptr, j == 0 ? &bundle0 : nullptr));
        if (j == 0) {
          have_bundle = true;
          have_kept = keep >= 0;
        }
        pts[j]["ladder"] = ladders.back().to_json();
        lt.push_back(ladders.back().to_json(true)["levels"]);
      }
      R.timing["ladder"] = seconds_since(t0);
      R.timing["ladder_levels"] = lt;
      bool mono = true, decay = true;
      for (auto& l : ladders) {
        mono = mono && l.monotone;
        decay = decay && l.constraint_decay;
      }
      verdicts["ladder_monotone"] = mono;
      if (c.schedule.size() >= 2) verdicts["constraint_decay"] = decay;

      // a-independence among points sharing x
      json ai = json::array();
      bool ai_ok = true;
      for (std::size_t i = 0; i < c.points.size(); ++i)
        for (std::size_t j = i + 1; j < c.points.size(); ++j) {
          if (c.points[i].x != c.points[j].x || c.points[i].a == c.points[j].a) continue;
          double d = std::abs(ladders[i].final_u - ladders[j].final_u);
          double se = std::sqrt(ladders[i].final_se * ladders[i].final_se + ladders[j].final_se * ladders[j].final_se);
          bool ok = d <= 3 * se;
          ai_ok = ai_ok && ok;
          ai.push_back({{"points", {i, j}}, {"discrepancy", d}, {"combined_stderr", se}, {"within_3se", ok}});
        }
      if (!ai.empty()) {
        rep["a_independence"] = ai;
        verdicts["a_independence"] = ai_ok;
      }
      if (c.schedule.size() >= 2) {
        std::vector<GrowthPoint> gp;
        for (std::size_t j = 0; j < c.points.size(); ++j) gp.push_back({c.points[j].x, c.points[j].a, &ladders[j]});
        GrowthCheck g = check_growth_bound(gp, spec);
        rep["growth_bound"] = g.to_json();
        verdicts["growth_bound"] = g.pass;
      }
    }

    if (has_stage(c, "forward")) {
      auto t0 = std::chrono::steady_clock::now();
      if (!have_bundle) {
        SimOptions so;
        so.antithetic = c.antithetic;
        bundle0 = simulate(spec, grid, c.points[0].x, c.points[0].a, c.n_paths, c.seed, so);
        have_bundle = true;
      }
      MomentReport m = moment_diagnostics(bundle0, spec, 2.0);
      rep["forward"] = {{"n_paths", bundle0.n_paths}, {"steps", bundle0.steps}, {"n_blown", bundle0.n_blown},
                        {"moments", m.to_json()}};
      R.timing["forward"] = seconds_since(t0);
    }
    if (c.dump_paths && have_bundle) {
      fs::create_directories(c.out);
      dump_bundle(bundle0, (fs::path(c.out) / "paths.bin").string());
    }

    if (dual) {
      auto t0 = std::chrono::steady_clock::now();
      const double n = c.dual.n;
      if (!have_kept) {
        LadderOptions lo;
        lo.antithetic = c.antithetic;
        lo.keep_level = 0;
        run_ladder(spec, grid, c.points[0].x, c.points[0].a, c.n_paths, c.seed, {n}, c.reg, lo, &kept, &bundle0);
        have_kept = true;
      }
      std::vector<TrialControl> trials;
      std::vector<double> e1(spec.dim, 0.0);
      json nu_info = json::object();
      // at least ~20 paths per bin and step on average
      const int cap = std::max(2, static_cast<int>(std::sqrt(bundle0.n_paths / 20.0)));
      const int bx = std::min(c.dual.bins_x, cap), bi = std::min(c.dual.bins_i, cap);
      for (auto& name : c.dual.trials) {
        if (name == "zero") {
          trials.push_back(TrialControl::fixed(name, e1));
        } else if (name == "plus" || name == "minus") {
          std::vector<double> v = e1;
          v[0] = name == "plus" ? n : -n;
          trials.push_back(TrialControl::fixed(name, v));
        } else if (name == "nu_star") {
          auto tb = std::make_shared<NuTable>(nu_star(kept, bundle0, n, bx, bi));
          nu_info = {{"bins_x", tb->bins_x}, {"bins_i", tb->bins_i}, {"empty_bins", tb->empty_bins}};
          trials.push_back(TrialControl::feedback(name, tb));
        } else {
          throw ConfigError("config field 'dual.trials': unknown control '" + name + "'");
        }
      }
      DualOptions opt;
      opt.antithetic = c.antithetic;
      opt.mode = c.dual.mode == "weighting" ? MeasureMode::Weighting : MeasureMode::Drift;
      json gam = {{"frozen", false}};
      if (spec.growth.L_F > 0) {
        GammaPath gp = gamma_process(spec, bundle0, kept);
        opt.gamma = std::make_shared<BinnedField>(bin_field(bundle0, gp.gamma, 1, bx, bi));
        gam = {{"frozen", true}, {"clamped", gp.clamped}, {"clamp_rate", gp.clamp_rate}, {"max_abs", gp.max_abs},
               {"warnings", gp.warnings}};
      }
      SandwichReport s = dual_sandwich(spec, grid, c.points[0].x, c.points[0].a, n, trials, c.dual.n_paths,
                                       c.dual.seed, kept.u, kept.u_se, opt);
      json d = s.to_json();
      d["nu_star_table"] = nu_info;
      d["gamma"] = gam;
      rep["dual"] = d;
      verdicts["dual_sandwich"] = s.pass;
      R.timing["dual"] = seconds_since(t0);
    }

    const bool oracle = has_stage(c, "oracle") && c.oracle != "none";
    std::string delta_col = oracle ? "," + c.oracle + "_delta" : "";
    csv << "point,x,a,n,u,stderr,constraint_mass,constraint_stderr" << delta_col << "\n";
    if (oracle) {
      auto t0 = std::chrono::steady_clock::now();
      bool ok = true, pre = true;
      bool have_pre = false;
      for (std::size_t j = 0; j < c.points.size(); ++j) {
        OracleValue o = oracle_value(c, spec, c.points[j]);
        json oj = {{"kind", c.oracle}, {"value", o.value}};
        oj.update(o.extra);
        if (o.extra.contains("fd_crosscheck")) {
          have_pre = true;
          pre = pre && o.extra["fd_crosscheck"]["pass"].get<bool>();
        }
        if (ladder) {
          double u = ladders[j].final_u, delta = u - o.value;
          double tol = std::max(c.oracle_abs, c.oracle_rel * std::abs(o.value));
          bool pass = std::abs(delta) <= tol;
          ok = ok && pass;
          oj["delta"] = delta;
          oj["tol"] = tol;
          oj["pass"] = pass;
        }
        pts[j]["oracle"] = oj;
      }
      if (ladder) verdicts["oracle_match"] = ok;
      if (have_pre) verdicts["oracle_prevalidation"] = pre;
      R.timing["oracle"] = seconds_since(t0);
    }
    rep["points"] = pts;

    auto vec = [](const std::vector<double>& v) {
      std::ostringstream o;
      o.precision(10);
      for (std::size_t k = 0; k < v.size(); ++k) o << (k ? " " : "") << v[k];
      return o.str();
    };
    if (ladder)
      for (std::size_t j = 0; j < c.points.size(); ++j)
        for (auto& l : ladders[j].levels) {
          csv << j << ',' << vec(c.points[j].x) << ',' << vec(c.points[j].a) << ',' << l.n << ',' << l.u << ','
              << l.se << ',' << l.constraint_mass << ',' << l.constraint_se;
          if (oracle) csv << ',' << l.u - pts[j]["oracle"]["value"].get<double>();
          csv << '\n';
        }

    bool all = true;
    for (auto it = verdicts.begin(); it != verdicts.end(); ++it) all = all && it.value().get<bool>();
    std::vector<std::string> warn;
    for (auto& l : ladders)
      for (auto& w : l.warnings) warn.push_back(w);
    rep["warnings"] = warn;
    return finish(all ? kExitOk : kExitVerdict, all ? "" : "one or more verdicts failed");
  } catch (const AssumptionError& e) {
    return finish(kExitAssumption, e.what());
  } catch (const StructuralError& e) {
    return finish(kExitAssumption, e.what());
  } catch (const Error& e) {
    return finish(kExitError, e.what());
  }
}

json compare_reports(const json& a, const json& b) {
  for (const json* r : {&a, &b})
    if (!r->is_object() || !r->contains("schema_version") || (*r)["schema_version"] != kReportSchema)
      throw ConfigError("schema mismatch: both reports need schema_version " + std::to_string(kReportSchema));
  json out;
  json cfg_diff = json::array();
  bool seed_mismatch = false;
  json ca = a.value("config", json::object()), cb = b.value("config", json::object());
  for (auto& op : json::diff(ca, cb)) {
    std::string path = op.at("path").get<std::string>();
    if (path.rfind("/out", 0) == 0) continue;
    if (path.rfind("/mc/seed", 0) == 0 || path.rfind("/dual/seed", 0) == 0) seed_mismatch = true;
    cfg_diff.push_back(path);
  }
  json structural = json::array();
  json deltas = json::array();
  bool consistent = true, zero = true;
  json pa = a.value("points", json::array()), pb = b.value("points", json::array());
  if (pa.size() != pb.size()) structural.push_back("point count differs: " + std::to_string(pa.size()) + " vs " + std::to_string(pb.size()));
  for (std::size_t j = 0; j < std::min(pa.size(), pb.size()); ++j) {
    if (!pa[j].contains("ladder") || !pb[j].contains("ladder")) continue;
    const json &la = pa[j]["ladder"], &lb = pb[j]["ladder"];
    if (la["schedule"] != lb["schedule"])
      structural.push_back("point " + std::to_string(j) + ": schedules differ " + la["schedule"].dump() + " vs " +
                           lb["schedule"].dump());
    std::map<double, json> lvb;
    for (auto& l : lb["levels"]) lvb[l["n"].get<double>()] = l;
    for (auto& l : la["levels"]) {
      double n = l["n"].get<double>();
      auto it = lvb.find(n);
      if (it == lvb.end()) continue;
      double ua = l["u"].get<double>(), ub = it->second["u"].get<double>();
      double sa = l["stderr"].get<double>(), sb = it->second["stderr"].get<double>();
      double d = ub - ua, se = std::sqrt(sa * sa + sb * sb);
      bool ok = std::abs(d) <= 3 * se;
      consistent = consistent && ok;
      zero = zero && d == 0.0;
      double dk = it->second["constraint_mass"].get<double>() - l["constraint_mass"].get<double>();
      zero = zero && dk == 0.0;
      deltas.push_back({{"point", j}, {"n", n}, {"u_a", ua}, {"u_b", ub}, {"delta_u", d}, {"combined_stderr", se},
                        {"delta_constraint_mass", dk}, {"consistent", ok}});
    }
  }
  out["config_differences"] = cfg_diff;
  out["seed_mismatch"] = seed_mismatch;
  out["structural_differences"] = structural;
  out["deltas"] = deltas;
  out["all_deltas_zero"] = zero;
  out["consistent"] = consistent;
  out["verdict"] = zero && cfg_diff.empty() && structural.empty() ? "identical" : (consistent ? "consistent" : "inconsistent");
  return out;
}

}  // namespace vhj
