#ifndef TIRCAL_H
#define TIRCAL_H

/* Generated by cbindgen from the tircal-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum TircalStatus {
  TIRCAL_STATUS_OK = 0,
  TIRCAL_STATUS_NULL_POINTER = 1,
  TIRCAL_STATUS_INVALID_UTF8 = 2,
  TIRCAL_STATUS_PARSE_ERROR = 3,
  TIRCAL_STATUS_INVALID_ARGUMENT = 4,
} TircalStatus;

// An opaque parsed trajectory.
typedef struct TircalTrajectory TircalTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses tagged trajectory text (tolerant mode) into an opaque handle.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
enum TircalStatus tircal_parse_trajectory(const char *text, struct TircalTrajectory **out);

// Releases a trajectory handle. A null pointer is a no-op.
//
// # Safety
// `t` must come from [`tircal_parse_trajectory`] and not be freed twice.
void tircal_trajectory_free(struct TircalTrajectory *t);

// Releases a string returned by this library. A null pointer is a no-op.
//
// # Safety
// `s` must come from this library and not be freed twice.
void tircal_string_free(char *s);

// Canonical tagged text of the trajectory; null on a null handle.
//
// # Safety
// `t` must be a valid handle.
char *tircal_trajectory_serialize(const struct TircalTrajectory *t);

// Number of tool calls, both kinds combined; -1 on a null handle.
//
// # Safety
// `t` must be a valid handle.
int64_t tircal_trajectory_tool_calls(const struct TircalTrajectory *t);

// Whitespace-token count over think/call/answer segments; -1 on null.
//
// # Safety
// `t` must be a valid handle.
int64_t tircal_trajectory_reasoning_length(const struct TircalTrajectory *t);

// The boxed final answer, or null when the trajectory has none.
//
// # Safety
// `t` must be a valid handle.
char *tircal_trajectory_final_answer(const struct TircalTrajectory *t);

// Average correctness per tool call over parallel arrays of length `n`,
// with the tool-count denominator clamped to at least 1.
//
// # Safety
// `correctness` and `tool_calls` must point to `n` readable elements and
// `out` must be writable.
enum TircalStatus tircal_effi(const double *correctness,
                              const uint64_t *tool_calls,
                              size_t n,
                              double *out);

// Group-normalized advantages of `n` rewards, written to `out` (length
// `n`). A zero-dispersion group yields all zeros.
//
// # Safety
// `rewards` must point to `n` readable elements, `out` to `n` writable ones.
enum TircalStatus tircal_group_advantages(const double *rewards, size_t n, double *out);

// Pareto selection over `n` (s_corr, s_tool) dispersion pairs: writes the
// `target` selected input indices to `out` in selection order.
//
// # Safety
// `s_corr` and `s_tool` must point to `n` readable elements and `out` to
// `target` writable ones.
enum TircalStatus tircal_pareto_select(const double *s_corr,
                                       const double *s_tool,
                                       size_t n,
                                       size_t target,
                                       size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIRCAL_H */
