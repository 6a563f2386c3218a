#ifndef SPINFK_H
#define SPINFK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum SpinfkStatus {
  SPINFK_STATUS_OK = 0,
  SPINFK_STATUS_NULL_POINTER = 1,
  SPINFK_STATUS_INVALID_UTF8 = 2,
  SPINFK_STATUS_CONFIG = 3,
  SPINFK_STATUS_INVALID_PARAMETER = 4,
  SPINFK_STATUS_NUMERICAL = 5,
  SPINFK_STATUS_IO = 6,
  SPINFK_STATUS_PANIC = 7,
  /**
   * The experiment ran but at least one acceptance check failed.
   */
  SPINFK_STATUS_FAILED = 8,
} SpinfkStatus;

/**
 * Opaque photon field model.
 */
typedef struct SpinfkModel SpinfkModel;

/**
 * Monte Carlo estimate of a complex matrix element.
 */
typedef struct SpinfkEstimate {
  double re;
  double im;
  double stderr;
  size_t n_paths;
} SpinfkEstimate;

/**
 * Cutoff-converged dense matrix element.
 */
typedef struct SpinfkOracleValue {
  double re;
  double im;
  size_t cutoff;
  double change;
  bool converged;
} SpinfkOracleValue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *spinfk_last_error(void);

/**
 * Library version as a static string.
 */
const char *spinfk_version(void);

/**
 * # Safety
 * `s` must come from this library or be NULL.
 */
void spinfk_string_free(char *s);

/**
 * Parses a field model from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpinfkStatus spinfk_model_from_json(const char *json, struct SpinfkModel **out);

/**
 * Single mode with ω = sqrt(|k|² + m²).
 *
 * # Safety
 * `k` must point to three doubles and `out` be a valid pointer.
 */
enum SpinfkStatus spinfk_model_single_mode(const double *k,
                                           double weight,
                                           double phi_hat,
                                           double coupling,
                                           double mass,
                                           struct SpinfkModel **out);

/**
 * # Safety
 * `model` must come from this library or be NULL.
 */
void spinfk_model_free(struct SpinfkModel *model);

/**
 * SHA-256 content hash of the model as 64 hex digits.
 *
 * # Safety
 * Pointers must be valid; free the result with `spinfk_string_free`.
 */
enum SpinfkStatus spinfk_model_hash(const struct SpinfkModel *model, char **out);

/**
 * Monte Carlo estimate of (Φ, e^{-tH^ε(P)} Ψ) for vacuum field states.
 * `phi` and `psi` are spinors as four doubles (re+, im+, re-, im-).
 *
 * # Safety
 * All pointers must be valid.
 */
enum SpinfkStatus spinfk_fiber_matrix_element(const struct SpinfkModel *model,
                                              const double *p,
                                              const double *phi,
                                              const double *psi,
                                              double t,
                                              double eps,
                                              size_t n_paths,
                                              size_t n_steps,
                                              uint64_t seed,
                                              struct SpinfkEstimate *out);

/**
 * Dense-oracle value of the same fiber matrix element, raising the
 * occupation cutoff until it changes by less than `tol`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SpinfkStatus spinfk_fiber_oracle(const struct SpinfkModel *model,
                                      const double *p,
                                      const double *phi,
                                      const double *psi,
                                      double t,
                                      double eps,
                                      double tol,
                                      size_t max_cutoff,
                                      struct SpinfkOracleValue *out);

/**
 * Ground energy of the truncated fiber operator H^ε(P).
 *
 * # Safety
 * All pointers must be valid.
 */
enum SpinfkStatus spinfk_fiber_ground_energy(const struct SpinfkModel *model,
                                             const double *p,
                                             double eps,
                                             size_t cutoff,
                                             double *out);

/**
 * Runs an experiment config (the CLI's JSON format) and returns the JSON
 * report. The `output` field is ignored. Returns `SPINFK_STATUS_FAILED`
 * with the report still filled in when an acceptance check fails.
 *
 * # Safety
 * `config_json` must be NUL-terminated and `report_json` valid; free the
 * report with `spinfk_string_free`.
 */
enum SpinfkStatus spinfk_run_experiment(const char *config_json, char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINFK_H */
