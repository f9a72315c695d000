#ifndef RADNER_H
#define RADNER_H

/* Generated by cbindgen from the radner-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every C API call.
 */
typedef enum RadnerStatus {
  /**
   * The call succeeded.
   */
  RADNER_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RADNER_STATUS_NULL_ARGUMENT = 1,
  /**
   * The input was rejected: malformed JSON, a schema violation, or an
   * out-of-range configuration value.
   */
  RADNER_STATUS_INVALID_INPUT = 2,
  /**
   * The solver or verifier failed on structurally valid input.
   */
  RADNER_STATUS_SOLVE_FAILED = 3,
  /**
   * An index or time argument lies outside its valid range.
   */
  RADNER_STATUS_OUT_OF_RANGE = 4,
  /**
   * The library panicked internally; this is a bug worth reporting.
   */
  RADNER_STATUS_PANIC = 5,
} RadnerStatus;

/**
 * Opaque handle to a solved equilibrium.
 */
typedef struct RadnerSolution RadnerSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI revision of this header; bumped on any breaking change.
 */
uint32_t radner_abi_version(void);

/**
 * Description of the most recent failure on the calling thread.
 *
 * The returned pointer is owned by the library and stays valid until the
 * next failing call on the same thread. Never free it.
 */
const char *radner_last_error_message(void);

/**
 * Parses scenario JSON (the same schema the `radner` CLI accepts) and
 * solves the market.
 *
 * On success writes a freshly allocated handle to `out_solution`; release
 * it with [`radner_solution_free`].
 *
 * # Safety
 *
 * `scenario_json` must point to a NUL-terminated string; `out_solution`
 * must point to writable memory for one pointer.
 */
enum RadnerStatus radner_solve_json(const char *scenario_json,
                                    struct RadnerSolution **out_solution);

/**
 * Releases a handle returned by [`radner_solve_json`]. Null is a no-op.
 *
 * # Safety
 *
 * `solution` must be null or a handle not yet freed.
 */
void radner_solution_free(struct RadnerSolution *solution);

/**
 * Number of agents in the solved market.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_count` must be writable.
 */
enum RadnerStatus radner_agent_count(const struct RadnerSolution *solution, uint32_t *out_count);

/**
 * The equilibrium initial price S₀.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_price` must be writable.
 */
enum RadnerStatus radner_initial_price(const struct RadnerSolution *solution, double *out_price);

/**
 * The one-based rank (position in the stop-trade ordering) of the
 * zero-based `agent`.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_rank` must be writable.
 */
enum RadnerStatus radner_rank_of_agent(const struct RadnerSolution *solution,
                                       uint32_t agent,
                                       uint32_t *out_rank);

/**
 * Stop-trade time τ⁽ʲ⁾ of the one-based rank `rank`.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_tau` must be writable.
 */
enum RadnerStatus radner_stop_time(const struct RadnerSolution *solution,
                                   uint32_t rank,
                                   double *out_tau);

/**
 * Equilibrium price drift μ(t).
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_drift` must be writable.
 */
enum RadnerStatus radner_drift(const struct RadnerSolution *solution, double t, double *out_drift);

/**
 * Holdings θ⁽ʲ⁾(t) of the one-based rank `rank` at time `t`.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_theta` must be writable.
 */
enum RadnerStatus radner_strategy(const struct RadnerSolution *solution,
                                  uint32_t rank,
                                  double t,
                                  double *out_theta);

/**
 * First-order-condition process Y⁽ʲ⁾(t) of the one-based rank `rank`;
 * bounded by ±λ in a valid equilibrium.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_y` must be writable.
 */
enum RadnerStatus radner_foc(const struct RadnerSolution *solution,
                             uint32_t rank,
                             double t,
                             double *out_y);

/**
 * Runs the verification suite on `grid_size` evaluation points.
 *
 * Writes the overall verdict to `out_passed`. If `out_report_json` is
 * non-null it additionally receives the full report as a JSON string
 * (release with [`radner_string_free`]). A `false` verdict still returns
 * [`RadnerStatus::Ok`]: the checks ran; they merely found violations.
 *
 * # Safety
 *
 * `solution` must be a live handle; `out_passed` must be writable;
 * `out_report_json` must be null or writable.
 */
enum RadnerStatus radner_verify_json(const struct RadnerSolution *solution,
                                     uint32_t grid_size,
                                     bool *out_passed,
                                     char **out_report_json);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 *
 * `text` must be null or a string returned by this library that has not
 * been freed yet.
 */
void radner_string_free(char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADNER_H */
