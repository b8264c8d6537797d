#ifndef MEG_H
#define MEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MegStatus {
  MEG_STATUS_OK = 0,
  MEG_STATUS_NULL_POINTER = 1,
  MEG_STATUS_INVALID_ARGUMENT = 2,
  MEG_STATUS_DIMENSION_MISMATCH = 3,
  MEG_STATUS_PARSE_ERROR = 4,
  MEG_STATUS_IO_ERROR = 5,
  MEG_STATUS_SIMULATION_ERROR = 6,
  MEG_STATUS_BUFFER_TOO_SMALL = 7,
  MEG_STATUS_PANIC = 8,
} MegStatus;

/**
 * Opaque toy pipeline.
 */
typedef struct MegPipeline MegPipeline;

/**
 * Opaque resolved scenario.
 */
typedef struct MegScenario MegScenario;

/**
 * Bit totals of one protocol.
 */
typedef struct MegOverhead {
  uint64_t uplink_bits;
  uint64_t downlink_bits;
  uint64_t aggregate_bits;
} MegOverhead;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *meg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *meg_version(void);

/**
 * Builds a pipeline with latent dim `d` over `height`x`width` grids and
 * `pool_factor` sketches. `es_count` per-server generators are derived from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum MegStatus meg_pipeline_new(size_t d,
                                size_t height,
                                size_t width,
                                size_t pool_factor,
                                size_t es_count,
                                uint64_t seed,
                                struct MegPipeline **out);

/**
 * # Safety
 * `pipeline` must come from [`meg_pipeline_new`] and not be used afterwards. NULL is ignored.
 */
void meg_pipeline_free(struct MegPipeline *pipeline);

/**
 * Latent dimension, or 0 for NULL.
 *
 * # Safety
 * `pipeline` must be NULL or a live handle.
 */
size_t meg_pipeline_latent_dim(const struct MegPipeline *pipeline);

/**
 * Text embedding length expected by [`meg_pipeline_infer`], or 0 for NULL.
 *
 * # Safety
 * `pipeline` must be NULL or a live handle.
 */
size_t meg_pipeline_text_dim(const struct MegPipeline *pipeline);

/**
 * Task seed of a row-major image and a text embedding.
 *
 * # Safety
 * Input pointers must reference `*_len` readable doubles; `out` must hold
 * `capacity` doubles; `out_len` must be writable. `out_len` receives the
 * required length even when the buffer is too small.
 */
enum MegStatus meg_pipeline_infer(const struct MegPipeline *pipeline,
                                  const double *image,
                                  size_t image_len,
                                  const double *embedding,
                                  size_t embedding_len,
                                  double *out,
                                  size_t capacity,
                                  size_t *out_len);

/**
 * Content seed from a task seed. `es_index < 0` selects the UE generator.
 *
 * # Safety
 * As for [`meg_pipeline_infer`].
 */
enum MegStatus meg_pipeline_generate(const struct MegPipeline *pipeline,
                                     const double *seed,
                                     size_t seed_len,
                                     int64_t es_index,
                                     double *out,
                                     size_t capacity,
                                     size_t *out_len);

/**
 * Row-major image of a content seed.
 *
 * # Safety
 * As for [`meg_pipeline_infer`].
 */
enum MegStatus meg_pipeline_decode(const struct MegPipeline *pipeline,
                                   const double *seed,
                                   size_t seed_len,
                                   double *out,
                                   size_t capacity,
                                   size_t *out_len);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MegStatus meg_scenario_load(const char *path, struct MegScenario **out);

/**
 * Parses a scenario from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum MegStatus meg_scenario_from_json(const char *json, struct MegScenario **out);

/**
 * # Safety
 * `scenario` must come from a scenario constructor and not be used afterwards. NULL is ignored.
 */
void meg_scenario_free(struct MegScenario *scenario);

/**
 * Replaces the master seed.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum MegStatus meg_scenario_set_seed(struct MegScenario *scenario, uint64_t master_seed);

/**
 * Sets the number of trials.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum MegStatus meg_scenario_set_trials(struct MegScenario *scenario, size_t trials);

/**
 * Runs the scenario and writes metrics.csv, overhead.csv,
 * overhead_breakdown.csv and transcript.json into `out_dir`.
 *
 * # Safety
 * `scenario` must be a live handle; `out_dir` a NUL-terminated string.
 */
enum MegStatus meg_scenario_run(const struct MegScenario *scenario, const char *out_dir);

/**
 * Writes table.csv (per-protocol overhead) into `out_dir`.
 *
 * # Safety
 * `scenario` must be a live handle; `out_dir` a NUL-terminated string.
 */
enum MegStatus meg_scenario_table(const struct MegScenario *scenario, const char *out_dir);

/**
 * Closed-form overhead of one protocol, named as on the command line.
 *
 * # Safety
 * `protocol` must be a NUL-terminated string; `out` must be writable.
 */
enum MegStatus meg_expected_overhead(const char *protocol,
                                     uint64_t image_bits,
                                     uint64_t seed_bits,
                                     uint64_t text_bits,
                                     uint64_t sketch_bits,
                                     size_t es_count,
                                     bool unicast_uplink,
                                     struct MegOverhead *out);

/**
 * `power * 10^(-snr_db/10)`.
 */
double meg_noise_variance(double snr_db, double signal_power);

/**
 * Shannon-rate transmission time in seconds.
 *
 * # Safety
 * `out_seconds` must be writable.
 */
enum MegStatus meg_transmission_time(uint64_t bits,
                                     double snr_db,
                                     double bandwidth_hz,
                                     double *out_seconds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEG_H */
