#ifndef AGENTSIM_H
#define AGENTSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Environment selector for [`ags_rollouts_run`].
 */
typedef enum AgsEnv {
  AGS_ENV_REAL = 0,
  AGS_ENV_WORLD = 1,
} AgsEnv;

/**
 * Status codes returned by every fallible call.
 */
typedef enum AgsStatus {
  AGS_STATUS_OK = 0,
  AGS_STATUS_NULL_POINTER = 1,
  AGS_STATUS_INVALID_CONFIG = 2,
  AGS_STATUS_RUNTIME = 3,
  AGS_STATUS_INVALID_ARGUMENT = 4,
  AGS_STATUS_BUFFER_TOO_SMALL = 5,
  AGS_STATUS_PANIC = 6,
} AgsStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct AgsConfig AgsConfig;

/**
 * Opaque set of rollouts.
 */
typedef struct AgsRollouts AgsRollouts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` as a
 * NUL-terminated string. Returns the message length without the NUL; the
 * copy is truncated when `cap` is too small.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes or null.
 */
size_t ags_last_error(char *buf, size_t cap);

/**
 * Default experiment configuration.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum AgsStatus ags_config_default(struct AgsConfig **out);

/**
 * Parse a configuration from JSON text. Missing fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum AgsStatus ags_config_from_json(const char *json, struct AgsConfig **out);

/**
 * Apply one `key=value` override, e.g. `"train.lr=0.25"`. The config is
 * left unchanged when the result does not validate.
 *
 * # Safety
 * `cfg` must be a live handle and `assignment` a NUL-terminated string.
 */
enum AgsStatus ags_config_set(struct AgsConfig *cfg, const char *assignment);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards.
 */
void ags_config_free(struct AgsConfig *cfg);

/**
 * Run `count` seeded rollouts of an environment.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid handle slot.
 */
enum AgsStatus ags_rollouts_run(const struct AgsConfig *cfg,
                                enum AgsEnv env,
                                size_t count,
                                struct AgsRollouts **out);

/**
 * Number of rollouts in the set; 0 for a null handle.
 *
 * # Safety
 * `r` must be a live handle or null.
 */
size_t ags_rollouts_len(const struct AgsRollouts *r);

/**
 * Total reward of rollout `index`, in currency units.
 *
 * # Safety
 * `r` must be a live handle and `out` valid for one write.
 */
enum AgsStatus ags_rollouts_total_reward(const struct AgsRollouts *r, size_t index, double *out);

/**
 * Write the rollouts as a JSONL log.
 *
 * # Safety
 * `r` must be a live handle and `path` a NUL-terminated string.
 */
enum AgsStatus ags_rollouts_write(const struct AgsRollouts *r, const char *path);

/**
 * # Safety
 * `r` must come from this library and not be used afterwards.
 */
void ags_rollouts_free(struct AgsRollouts *r);

/**
 * Per-rollout feedback values under the config's feedback spec. Rollouts
 * without feedback are skipped. `*len` receives the number of values;
 * when it exceeds `cap` nothing is written and `BufferTooSmall` returned.
 *
 * # Safety
 * `values` must be valid for `cap` writes (or null with `cap == 0`) and
 * `len` valid for one write.
 */
enum AgsStatus ags_feedback_values(const struct AgsConfig *cfg,
                                   const struct AgsRollouts *r,
                                   double *values,
                                   size_t cap,
                                   size_t *len);

/**
 * Unbiased MMD^2 with a Gaussian kernel whose bandwidth is the median
 * pooled distance.
 *
 * # Safety
 * `xs` and `ys` must be valid for `nx` and `ny` reads; `out` for one write.
 */
enum AgsStatus ags_mmd(const double *xs, size_t nx, const double *ys, size_t ny, double *out);

/**
 * Energy distance between two samples.
 *
 * # Safety
 * Same as [`ags_mmd`].
 */
enum AgsStatus ags_energy_distance(const double *xs,
                                   size_t nx,
                                   const double *ys,
                                   size_t ny,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGENTSIM_H */
