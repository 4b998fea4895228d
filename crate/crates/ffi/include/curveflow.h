#ifndef CURVEFLOW_H
#define CURVEFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  // A required pointer argument was null.
  CF_STATUS_NULL_ARGUMENT = 1,
  // A string was not valid UTF-8, a length was wrong or an index out of range.
  CF_STATUS_INVALID_ARGUMENT = 2,
  // Rejected configuration or input data.
  CF_STATUS_CONFIG = 3,
  // Admissibility loss, stiffness or another numerical fault during a run.
  CF_STATUS_NUMERICAL = 4,
  // Curvature vector outside the speed function's cone.
  CF_STATUS_OUTSIDE_CONE = 5,
  CF_STATUS_IO = 6,
  // A Rust panic was caught at the boundary.
  CF_STATUS_PANIC = 7,
} CfStatus;

// Parsed run configuration.
typedef struct CfConfig CfConfig;

// Finished grid run with its snapshots.
typedef struct CfRun CfRun;

// Speed function `f`.
typedef struct CfSpeed CfSpeed;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *cf_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cf_version(void);

// Parses a speed name (`H1`, `Hk^1/k:k=2`, `quotient:k=2,l=1`, `Gauss`) for dimension `dim`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum CfStatus cf_speed_parse(const char *name, size_t dim, struct CfSpeed **out);

// # Safety
// `speed` must come from [`cf_speed_parse`] and not be used afterwards.
void cf_speed_free(struct CfSpeed *speed);

// Dimension of the speed's curvature vectors.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_speed_dim(const struct CfSpeed *speed, size_t *out);

// `f(λ)` for `λ` of length `len`.
//
// # Safety
// `lambda` must point to `len` doubles; other pointers must be valid.
enum CfStatus cf_speed_eval(const struct CfSpeed *speed,
                            const double *lambda,
                            size_t len,
                            double *out);

// `f(λ)` and its gradient `∂f/∂λ_i` written to `grad` (length `len`).
//
// # Safety
// `lambda` and `grad` must point to `len` doubles; other pointers must be valid.
enum CfStatus cf_speed_eval_grad(const struct CfSpeed *speed,
                                 const double *lambda,
                                 size_t len,
                                 double *out_f,
                                 double *grad);

// Writes 1 to `out` when `λ` lies in the speed's cone, else 0.
//
// # Safety
// `lambda` must point to `len` doubles; other pointers must be valid.
enum CfStatus cf_speed_contains(const struct CfSpeed *speed,
                                const double *lambda,
                                size_t len,
                                int32_t *out);

// Samples the structure conditions; writes 1 to `passed` when all hold.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_speed_check_properties(const struct CfSpeed *speed,
                                        size_t samples,
                                        uint64_t seed,
                                        int32_t *passed);

// Extinction time `ρ0² / (2 f(1,…,1,0))` of the cylinder over a sphere of radius `rho0`.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_cylinder_extinction_time(const struct CfSpeed *speed, double rho0, double *out);

// Parses flat `key = value` config text (`#` comments). Null text gives the defaults.
//
// # Safety
// `text` must be null or NUL-terminated; `out` must be valid.
enum CfStatus cf_config_from_text(const char *text, struct CfConfig **out);

// Applies one `key=value` override. The config is left unchanged on failure.
//
// # Safety
// `cfg` must come from [`cf_config_from_text`]; `pair` must be NUL-terminated.
enum CfStatus cf_config_set(struct CfConfig *cfg, const char *pair);

// # Safety
// `cfg` must come from [`cf_config_from_text`] and not be used afterwards.
void cf_config_free(struct CfConfig *cfg);

// Builds the configured scenario and runs it at the configured ceiling.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_run(const struct CfConfig *cfg, struct CfRun **out);

// # Safety
// `run` must come from [`cf_run`] and not be used afterwards.
void cf_run_free(struct CfRun *run);

// Number of grid nodes per snapshot.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_run_node_count(const struct CfRun *run, size_t *out);

// # Safety
// Pointers must be valid.
enum CfStatus cf_run_snapshot_count(const struct CfRun *run, size_t *out);

// Time of snapshot `k`.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_run_snapshot_time(const struct CfRun *run, size_t k, double *out);

// Copies the nodal values of snapshot `k` into `buf`, which must hold exactly
// [`cf_run_node_count`] doubles (`len`). Nodes are ordered with the first axis fastest.
//
// # Safety
// `buf` must point to `len` writable doubles; other pointers must be valid.
enum CfStatus cf_run_snapshot_values(const struct CfRun *run, size_t k, double *buf, size_t len);

// Writes the escape time and 1 to `escaped` when the run escaped, else 0 and NaN.
//
// # Safety
// Pointers must be valid.
enum CfStatus cf_run_escape_time(const struct CfRun *run, int32_t *escaped, double *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CURVEFLOW_H */
