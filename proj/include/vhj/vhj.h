/* C interface to the viscous Hamilton-Jacobi BSDE solver. */
#ifndef VHJ_VHJ_H
#define VHJ_VHJ_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(VHJ_BUILDING)
#define VHJ_API __attribute__((visibility("default")))
#else
#define VHJ_API
#endif

typedef enum vhj_status {
  VHJ_OK = 0,
  VHJ_ERR_ARGUMENT = 1,   /* null pointer or malformed argument */
  VHJ_ERR_CONFIG = 2,     /* configuration or parse error */
  VHJ_ERR_STRUCTURAL = 3, /* problem definition is incomplete */
  VHJ_ERR_ASSUMPTION = 4, /* standing assumptions violated */
  VHJ_ERR_NUMERICAL = 5,  /* ill-conditioning, blow-up, escape */
  VHJ_ERR_INTERNAL = 6
} vhj_status;

typedef struct vhj_problem vhj_problem;
typedef struct vhj_paths vhj_paths;
typedef struct vhj_ladder vhj_ladder;

VHJ_API const char* vhj_version(void);
/* Message of the last failing call on this thread; empty after success. */
VHJ_API const char* vhj_last_error(void);

/* Strings returned through char** are owned by the caller. */
VHJ_API void vhj_string_free(char* s);

/* Registry problem: kpz, lq, power_utility, exp_utility. params_json may be NULL. */
VHJ_API vhj_status vhj_problem_create(const char* name, const char* params_json, vhj_problem** out);
/* Custom problem from a JSON file. */
VHJ_API vhj_status vhj_problem_from_file(const char* path, vhj_problem** out);
VHJ_API void vhj_problem_free(vhj_problem* p);
VHJ_API vhj_status vhj_problem_dim(const vhj_problem* p, int* dim);
VHJ_API vhj_status vhj_problem_horizon(const vhj_problem* p, double* T);
/* pass is set to 1 when every check passes; report_json may be NULL. */
VHJ_API vhj_status vhj_problem_validate(const vhj_problem* p, int* pass, char** report_json);

/* f(x, a, y) = -inf_z [a.z + F(x, y, z)] */
VHJ_API vhj_status vhj_conjugate(const vhj_problem* p, const double* x, const double* a, double y, double* out);

VHJ_API vhj_status vhj_paths_simulate(const vhj_problem* p, int steps, const double* x, const double* a,
                                      long n_paths, uint64_t seed, int antithetic, vhj_paths** out);
VHJ_API vhj_status vhj_paths_load(const char* path, vhj_paths** out);
VHJ_API vhj_status vhj_paths_dump(const vhj_paths* b, const char* path);
VHJ_API vhj_status vhj_paths_info(const vhj_paths* b, long* n_paths, int* steps, int* dim);
/* Copies X and I at node k of a path (dim values each); either pointer may be NULL. */
VHJ_API vhj_status vhj_paths_state(const vhj_paths* b, long path, int k, double* x, double* i);
VHJ_API void vhj_paths_free(vhj_paths* b);

/* Penalization ladder from (t = 0, x, a). regression_json may be NULL. */
VHJ_API vhj_status vhj_ladder_run(const vhj_problem* p, int steps, const double* x, const double* a, long n_paths,
                                  uint64_t seed, const double* schedule, size_t n_levels,
                                  const char* regression_json, vhj_ladder** out);
VHJ_API vhj_status vhj_ladder_u(const vhj_ladder* l, double* u, double* stderr_u);
VHJ_API vhj_status vhj_ladder_levels(const vhj_ladder* l, size_t* n_levels);
VHJ_API vhj_status vhj_ladder_level(const vhj_ladder* l, size_t level, double* n, double* u, double* stderr_u,
                                    double* constraint_mass);
VHJ_API vhj_status vhj_ladder_monotone(const vhj_ladder* l, int* monotone);
VHJ_API vhj_status vhj_ladder_to_json(const vhj_ladder* l, char** out);
VHJ_API void vhj_ladder_free(vhj_ladder* l);

/* kind: cole_hopf, riccati or fd. */
VHJ_API vhj_status vhj_oracle_value(const vhj_problem* p, const char* kind, double t, const double* x, double* out);

/* preset, config_json and overrides_json may each be NULL; they apply in that order.
   A completed run returns VHJ_OK and its exit code (0 ok, 2 assumption failure,
   3 verdict failure); configuration errors return VHJ_ERR_CONFIG. */
VHJ_API vhj_status vhj_experiment_run(const char* preset, const char* config_json, const char* overrides_json,
                                      int* exit_code, char** report_json);
VHJ_API vhj_status vhj_compare(const char* report_a_json, const char* report_b_json, char** diff_json);

#ifdef __cplusplus
}
#endif

#endif
