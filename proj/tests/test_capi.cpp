#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "vhj/vhj.h"

TEST_CASE("problem handle") {
  vhj_problem* p = nullptr;
  REQUIRE(vhj_problem_create("kpz", "{\"lambda\": 0.5}", &p) == VHJ_OK);
  int d = 0;
  double T = 0;
  CHECK(vhj_problem_dim(p, &d) == VHJ_OK);
  CHECK(vhj_problem_horizon(p, &T) == VHJ_OK);
  CHECK(d == 1);
  CHECK(T == 1.0);
  int pass = 0;
  char* rep = nullptr;
  CHECK(vhj_problem_validate(p, &pass, &rep) == VHJ_OK);
  CHECK(pass == 1);
  CHECK(std::strstr(rep, "findings") != nullptr);
  vhj_string_free(rep);
  double x = 0, a = 1.0, f = 0;
  CHECK(vhj_conjugate(p, &x, &a, 0.0, &f) == VHJ_OK);
  CHECK(f == doctest::Approx(0.5));
  vhj_problem_free(p);
}

TEST_CASE("error codes") {
  vhj_problem* p = nullptr;
  CHECK(vhj_problem_create("nope", nullptr, &p) == VHJ_ERR_CONFIG);
  CHECK(std::string(vhj_last_error()).find("nope") != std::string::npos);
  CHECK(vhj_problem_create("kpz", "{not json", &p) == VHJ_ERR_CONFIG);
  CHECK(vhj_problem_create(nullptr, nullptr, &p) == VHJ_ERR_ARGUMENT);
  CHECK(vhj_problem_from_file("missing.json", &p) == VHJ_ERR_CONFIG);
  REQUIRE(vhj_problem_create("kpz", nullptr, &p) == VHJ_OK);
  CHECK(std::string(vhj_last_error()).empty());
  double x = 0, v = 0;
  CHECK(vhj_oracle_value(p, "riccati", 0.0, &x, &v) == VHJ_ERR_CONFIG);
  CHECK(vhj_oracle_value(p, "magic", 0.0, &x, &v) == VHJ_ERR_CONFIG);
  vhj_problem_free(p);
}

TEST_CASE("paths and ladder") {
  vhj_problem* p = nullptr;
  REQUIRE(vhj_problem_create("kpz", nullptr, &p) == VHJ_OK);
  double x = 0, a = 0;
  vhj_paths* b = nullptr;
  REQUIRE(vhj_paths_simulate(p, 10, &x, &a, 1000, 3, 0, &b) == VHJ_OK);
  long n = 0;
  int steps = 0, dim = 0;
  CHECK(vhj_paths_info(b, &n, &steps, &dim) == VHJ_OK);
  CHECK(n == 1000);
  CHECK(steps == 10);
  double xs = 1, is = 1;
  CHECK(vhj_paths_state(b, 5, 0, &xs, &is) == VHJ_OK);
  CHECK(xs == 0.0);
  CHECK(vhj_paths_state(b, 5, 11, &xs, &is) == VHJ_ERR_ARGUMENT);
  CHECK(vhj_paths_dump(b, "capi_bundle.bin") == VHJ_OK);
  vhj_paths* c = nullptr;
  CHECK(vhj_paths_load("capi_bundle.bin", &c) == VHJ_OK);
  double xc = 0;
  vhj_paths_state(b, 7, 10, &xs, nullptr);
  vhj_paths_state(c, 7, 10, &xc, nullptr);
  CHECK(xs == xc);
  std::remove("capi_bundle.bin");
  vhj_paths_free(b);
  vhj_paths_free(c);

  const double sched[] = {1, 4, 16};
  vhj_ladder* l = nullptr;
  REQUIRE(vhj_ladder_run(p, 10, &x, &a, 5000, 7, sched, 3, nullptr, &l) == VHJ_OK);
  size_t levels = 0;
  CHECK(vhj_ladder_levels(l, &levels) == VHJ_OK);
  CHECK(levels == 3);
  double u = 0, se = 0, u1 = 0, m1 = 0, nn = 0;
  CHECK(vhj_ladder_u(l, &u, &se) == VHJ_OK);
  CHECK(vhj_ladder_level(l, 0, &nn, &u1, nullptr, &m1) == VHJ_OK);
  CHECK(nn == 1.0);
  CHECK(u1 > u);
  CHECK(vhj_ladder_level(l, 3, &nn, nullptr, nullptr, nullptr) == VHJ_ERR_ARGUMENT);
  double ch = 0;
  CHECK(vhj_oracle_value(p, "cole_hopf", 0.0, &x, &ch) == VHJ_OK);
  CHECK(std::abs(u - ch) < 0.05);
  char* js = nullptr;
  CHECK(vhj_ladder_to_json(l, &js) == VHJ_OK);
  CHECK(std::strstr(js, "levels") != nullptr);
  vhj_string_free(js);
  vhj_ladder_free(l);

  const double bad[] = {4, 1};
  CHECK(vhj_ladder_run(p, 10, &x, &a, 100, 7, bad, 2, nullptr, &l) == VHJ_ERR_CONFIG);
  CHECK(vhj_ladder_run(p, 10, &x, &a, 100, 7, sched, 3, "{\"basis\": \"nope\"}", &l) == VHJ_ERR_CONFIG);
  vhj_problem_free(p);
}

TEST_CASE("experiment and compare") {
  const char* cfg = "{\"mc\": {\"n_paths\": 1000}, \"grid\": {\"steps\": 10}, \"schedule\": [1, 4],"
                    " \"stages\": [\"ladder\"], \"out\": \"capi_out\"}";
  int code = -1;
  char* r1 = nullptr;
  char* r2 = nullptr;
  REQUIRE(vhj_experiment_run("smoke", cfg, nullptr, &code, &r1) == VHJ_OK);
  CHECK(code == 0);
  REQUIRE(vhj_experiment_run("smoke", cfg, "{\"mc\": {\"seed\": 99}}", &code, &r2) == VHJ_OK);
  char* diff = nullptr;
  REQUIRE(vhj_compare(r1, r2, &diff) == VHJ_OK);
  CHECK(std::strstr(diff, "\"seed_mismatch\": true") != nullptr);
  vhj_string_free(diff);
  CHECK(vhj_compare(r1, "{}", &diff) == VHJ_ERR_CONFIG);
  vhj_string_free(r1);
  vhj_string_free(r2);

  CHECK(vhj_experiment_run(nullptr, "{\"grid\": {\"T\": 0}}", nullptr, &code, nullptr) == VHJ_ERR_CONFIG);
  CHECK(std::string(vhj_last_error()).find("grid.T") != std::string::npos);
  CHECK(vhj_experiment_run(nullptr, "{broken", nullptr, &code, nullptr) == VHJ_ERR_CONFIG);
  CHECK(std::string(vhj_last_error()).find("config parse error") != std::string::npos);
}

TEST_CASE("version") { CHECK(std::strlen(vhj_version()) > 0); }
