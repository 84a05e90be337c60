#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "experiment.hpp"

using namespace vhj;

namespace {

ExperimentConfig small(uint64_t seed = 12345) {
  ExperimentConfig c = apply_preset({}, "smoke");
  c.n_paths = 2000;
  c.steps = 10;
  c.seed = seed;
  c.schedule = {1, 4, 16};
  c.stages = {"validate", "ladder", "oracle"};
  c.out = "vhj_test_out";
  return c;
}

}  // namespace

TEST_CASE("horizon must be positive") {
  try {
    ExperimentConfig::from_json({{"problem", "kpz"}, {"grid", {{"T", 0}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid.T") != std::string::npos);
  }
}

TEST_CASE("config errors name the field") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json({{"mc", {{"paths", 10}}}}),
                       doctest::Contains("mc.paths"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"schedule", {4, 2}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"stages", {"ladder", "paint"}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"preset", "acceptance"}, {"mc", {{"n_paths", 500}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_file("no_such_config.json"), ConfigError);
}

TEST_CASE("presets") {
  CHECK(apply_preset({}, "smoke").n_paths == 1000);
  CHECK(apply_preset({}, "acceptance").steps == 50);
  CHECK(apply_preset({}, "deep").n_paths == 1000000);
  CHECK_THROWS_AS(apply_preset({}, "huge"), ConfigError);
}

TEST_CASE("config round trip") {
  ExperimentConfig c = small();
  ExperimentConfig d = ExperimentConfig::from_json(c.to_json());
  CHECK(d.to_json() == c.to_json());
}

TEST_CASE("reports are reproducible and compare as identical") {
  RunResult a = run_experiment(small(), false), b = run_experiment(small(), false);
  CHECK(a.exit_code == kExitOk);
  json ja = a.report, jb = b.report;
  ja.erase("timestamp");
  jb.erase("timestamp");
  CHECK(ja.dump() == jb.dump());
  CHECK(a.summary_csv == b.summary_csv);
  json diff = compare_reports(a.report, b.report);
  CHECK(diff["verdict"] == "identical");
  CHECK(diff["all_deltas_zero"] == true);
}

TEST_CASE("compare flags seeds and schedules") {
  RunResult a = run_experiment(small(1), false), b = run_experiment(small(2), false);
  json diff = compare_reports(a.report, b.report);
  CHECK(diff["seed_mismatch"] == true);
  CHECK(diff["all_deltas_zero"] == false);
  CHECK(diff["verdict"] != "identical");

  ExperimentConfig c = small(1);
  c.schedule = {1, 2, 4, 16};
  json d2 = compare_reports(a.report, run_experiment(c, false).report);
  CHECK_FALSE(d2["structural_differences"].empty());

  json broken = a.report;
  broken["schema_version"] = 99;
  CHECK_THROWS_AS(compare_reports(a.report, broken), ConfigError);
}

TEST_CASE("files are written") {
  ExperimentConfig c = small();
  c.out = "vhj_test_files";
  std::filesystem::remove_all(c.out);
  RunResult r = run_experiment(c, true);
  CHECK(std::filesystem::exists(c.out + "/report.json"));
  CHECK(std::filesystem::exists(c.out + "/summary.csv"));
  CHECK(std::filesystem::exists(c.out + "/timing.json"));
  std::ifstream in(c.out + "/report.json");
  json j = json::parse(in);
  CHECK(j["schema_version"] == kReportSchema);
  CHECK(j.contains("verdicts"));
  std::filesystem::remove_all(c.out);
}

TEST_CASE("assumption failure exits with 2") {
  ExperimentConfig c = small();
  c.problem = "custom";
  c.custom = {{"dim", 1}, {"F", {{"quad", 1.0}, {"y_coef", 2.0}}}, {"growth", {{"L_F", 0.5}}}};
  c.stages = {"validate", "ladder"};
  RunResult r = run_experiment(c, false);
  CHECK(r.exit_code == kExitAssumption);
}

TEST_CASE("lq default points carry riccati deltas") {
  ExperimentConfig c = small();
  c.problem = "lq";
  c.stages = {"ladder", "oracle"};
  RunResult r = run_experiment(c, false);
  REQUIRE(r.report["points"].size() == 3);
  for (auto& p : r.report["points"]) CHECK(p["oracle"]["kind"] == "riccati");
}
