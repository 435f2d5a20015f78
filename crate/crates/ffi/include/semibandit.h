#ifndef SEMIBANDIT_H
#define SEMIBANDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_UTF8 = 2,
  SB_STATUS_INVALID_ARGUMENT = 3,
  SB_STATUS_CONFIG = 4,
  SB_STATUS_IO = 5,
  SB_STATUS_SIMULATION = 6,
  SB_STATUS_BUFFER_TOO_SMALL = 7,
  SB_STATUS_PANIC = 8,
} SbStatus;

/*
 Opaque environment handle.
 */
typedef struct SbEnv SbEnv;

/*
 Opaque regret trace handle.
 */
typedef struct SbTrace SbTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *sb_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *sb_version(void);

/*
 Builds an environment from TOML text. Relative paths inside the
 description resolve against `base_dir`, or the working directory when
 `base_dir` is null.

 # Safety
 `toml` and a non-null `base_dir` must be NUL-terminated strings; `out`
 must be valid for writes.
 */
enum SbStatus sb_env_from_toml(const char *toml, const char *base_dir, struct SbEnv **out);

/*
 Builds an environment from a TOML file.

 # Safety
 `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum SbStatus sb_env_from_file(const char *path, struct SbEnv **out);

/*
 # Safety
 `env` must be null or a handle from `sb_env_from_*` not yet freed.
 */
void sb_env_free(struct SbEnv *env);

/*
 Number of arms, or 0 for a null handle.

 # Safety
 `env` must be null or a live handle.
 */
size_t sb_env_arm_count(const struct SbEnv *env);

/*
 Value of the best action under the true means.

 # Safety
 `env` must be null or a live handle; `out` valid for writes.
 */
enum SbStatus sb_env_optimal_value(const struct SbEnv *env, double *out);

/*
 Runs `policy` (`escb-c`, `escb-c-sparse`, `escb-c-v`, `cucb-v`,
 `cucb-kl`) in `mode` (`exact`, `greedy`, `lovasz`; null means exact)
 for `horizon` rounds.

 # Safety
 `env` must be a live handle, `policy` and a non-null `mode`
 NUL-terminated strings, and `out` valid for writes.
 */
enum SbStatus sb_run(const struct SbEnv *env,
                     const char *policy,
                     const char *mode,
                     uint64_t horizon,
                     uint64_t seed,
                     struct SbTrace **out);

/*
 Number of rounds in the trace, or 0 for a null handle.

 # Safety
 `trace` must be null or a live handle.
 */
size_t sb_trace_len(const struct SbTrace *trace);

/*
 Copies the cumulative regret of every round into `buf`, which must hold
 at least `sb_trace_len` values.

 # Safety
 `trace` must be a live handle and `buf` valid for `len` writes.
 */
enum SbStatus sb_trace_regret(const struct SbTrace *trace, double *buf, size_t len);

/*
 Writes the trace as CSV (`seed,t,action,gap,cum_regret`).

 # Safety
 `trace` must be a live handle and `path` a NUL-terminated string.
 */
enum SbStatus sb_trace_write_csv(const struct SbTrace *trace, const char *path);

/*
 # Safety
 `trace` must be null or a handle from [`sb_run`] not yet freed.
 */
void sb_trace_free(struct SbTrace *trace);

/*
 Largest `x ∈ [p, 1]` with `n · kl(p, x) ≤ budget`.
 */
double sb_kl_index(double p, uint64_t n, double budget);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMIBANDIT_H */
