// Command line front end over the C interface.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vhj/vhj.h"

using json = nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void print_summary(const json& rep) {
  std::cout << "problem " << rep["problem"].value("name", "?") << ", exit " << rep.value("exit_code", -1) << "\n";
  if (rep.contains("points"))
    for (auto& p : rep["points"]) {
      std::cout << "  x=" << p["x"].dump() << " a=" << p["a"].dump();
      if (p.contains("ladder"))
        std::cout << "  u=" << p["ladder"]["final_u"].get<double>() << " +- " << p["ladder"]["final_stderr"].get<double>();
      if (p.contains("oracle")) {
        std::cout << "  " << p["oracle"]["kind"].get<std::string>() << "=" << p["oracle"]["value"].get<double>();
        if (p["oracle"].contains("delta")) std::cout << " delta=" << p["oracle"]["delta"].get<double>();
      }
      std::cout << "\n";
    }
  if (rep.contains("verdicts"))
    for (auto it = rep["verdicts"].begin(); it != rep["verdicts"].end(); ++it)
      std::cout << "  " << it.key() << ": " << (it.value().get<bool>() ? "pass" : "FAIL") << "\n";
  if (rep.contains("message")) std::cout << "  " << rep["message"].get<std::string>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viscous Hamilton-Jacobi solver via constrained BSDEs"};
  app.require_subcommand(1);

  std::string problem, config, preset, out, oracle, stages, custom;
  uint64_t seed = 0;
  bool seed_set = false;
  auto* run = app.add_subcommand("run", "run an experiment and write report.json and summary.csv");
  run->add_option("--problem", problem, "registry problem (kpz, lq, power_utility, exp_utility)");
  run->add_option("--config", config, "experiment config file (JSON)");
  run->add_option("--custom", custom, "custom problem file (JSON)");
  run->add_option("--preset", preset, "smoke, acceptance or deep")->check(CLI::IsMember({"smoke", "acceptance", "deep"}));
  run->add_option_function<uint64_t>("--seed", [&](const uint64_t& s) { seed = s; seed_set = true; }, "master seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--oracle", oracle, "reference solution")
      ->check(CLI::IsMember({"auto", "cole_hopf", "riccati", "fd", "none"}));
  run->add_option("--stages", stages, "comma list of validate, forward, ladder, dual, oracle");

  std::string rep_a, rep_b;
  auto* cmp = app.add_subcommand("compare", "diff two reports");
  cmp->add_option("report_a", rep_a)->required();
  cmp->add_option("report_b", rep_b)->required();

  std::string vproblem = "kpz", vparams, vcustom;
  auto* val = app.add_subcommand("validate", "check a problem against the standing assumptions");
  val->add_option("--problem", vproblem, "registry problem");
  val->add_option("--params", vparams, "problem parameters (JSON)");
  val->add_option("--custom", vcustom, "custom problem file (JSON)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      json ov = json::object();
      if (!problem.empty()) ov["problem"] = problem;
      if (!custom.empty()) ov["custom_path"] = custom;
      if (seed_set) ov["mc"] = {{"seed", seed}};
      if (!out.empty()) ov["out"] = out;
      if (!oracle.empty()) ov["oracle"] = oracle;
      if (!stages.empty()) ov["stages"] = split(stages);
      std::string cfg = config.empty() ? "" : slurp(config);
      int code = 1;
      char* report = nullptr;
      std::string ovs = ov.dump();
      vhj_status st = vhj_experiment_run(preset.empty() ? nullptr : preset.c_str(), cfg.c_str(), ovs.c_str(), &code,
                                         &report);
      if (st != VHJ_OK) {
        std::cerr << "error: " << vhj_last_error() << "\n";
        return 1;
      }
      print_summary(json::parse(report));
      vhj_string_free(report);
      return code;
    }
    if (*cmp) {
      std::string a = slurp(rep_a), b = slurp(rep_b);
      char* diff = nullptr;
      if (vhj_compare(a.c_str(), b.c_str(), &diff) != VHJ_OK) {
        std::cerr << "error: " << vhj_last_error() << "\n";
        return 1;
      }
      std::cout << diff << "\n";
      vhj_string_free(diff);
      return 0;
    }
    if (*val) {
      vhj_problem* p = nullptr;
      vhj_status st = vcustom.empty() ? vhj_problem_create(vproblem.c_str(), vparams.c_str(), &p)
                                      : vhj_problem_from_file(vcustom.c_str(), &p);
      if (st != VHJ_OK) {
        std::cerr << "error: " << vhj_last_error() << "\n";
        return st == VHJ_ERR_STRUCTURAL || st == VHJ_ERR_ASSUMPTION ? 2 : 1;
      }
      int pass = 0;
      char* rep = nullptr;
      st = vhj_problem_validate(p, &pass, &rep);
      vhj_problem_free(p);
      if (st != VHJ_OK) {
        std::cerr << "error: " << vhj_last_error() << "\n";
        return 1;
      }
      std::cout << rep << "\n";
      vhj_string_free(rep);
      return pass ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
