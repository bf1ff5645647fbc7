#ifndef QMODEL_H
#define QMODEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum QmStatus {
  QM_STATUS_OK = 0,
  QM_STATUS_NULL_POINTER = 1,
  QM_STATUS_INVALID_ARGUMENT = 2,
  QM_STATUS_PARSE = 3,
  QM_STATUS_RANGE = 4,
  QM_STATUS_DEGENERATE = 5,
  QM_STATUS_NUMERIC = 6,
  QM_STATUS_IO = 7,
  QM_STATUS_INTERNAL = 8,
  QM_STATUS_PANIC = 9,
} QmStatus;

typedef struct QmData QmData;

typedef struct QmModel QmModel;

typedef struct QmReport QmReport;

typedef struct QmSpace QmSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *qm_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void qm_string_free(char *s);

/**
 * Evaluate `expr` over a grid with side lengths `dims` and add noise
 * (`"none"`, `"uniform:W"` or `"gaussian:S"`) drawn from `seed`.
 *
 * # Safety
 * Pointers must be valid; `dims` must hold `ndims` entries.
 */
enum QmStatus qm_data_generate(const char *expr,
                               const size_t *dims,
                               size_t ndims,
                               const char *noise,
                               uint64_t seed,
                               struct QmData **out);

/**
 * Build a table from row-major values.
 *
 * # Safety
 * `dims` must hold `ndims` entries and `values` `len` entries.
 */
enum QmStatus qm_data_from_values(const size_t *dims,
                                  size_t ndims,
                                  const int64_t *values,
                                  size_t len,
                                  struct QmData **out);

/**
 * Read a CSV table with header `x1,...,xd,f`.
 *
 * # Safety
 * `path` must be a valid C string.
 */
enum QmStatus qm_data_from_csv(const char *path, struct QmData **out);

/**
 * Number of grid points.
 *
 * # Safety
 * `data` must be a live handle.
 */
enum QmStatus qm_data_len(const struct QmData *data, size_t *out);

/**
 * # Safety
 * `data` must come from this library and not have been freed.
 */
void qm_data_free(struct QmData *data);

/**
 * Parse a trial model in `x1..x{inputs}` and `y1..y{params}`.
 *
 * # Safety
 * `source` must be a valid C string.
 */
enum QmStatus qm_model_parse(const char *source,
                             size_t inputs,
                             size_t params,
                             struct QmModel **out);

/**
 * # Safety
 * `model` must come from this library and not have been freed.
 */
void qm_model_free(struct QmModel *model);

/**
 * A parameter space with fields `y1..y{count}`; `is_signed[i]` nonzero makes
 * field `i` two's-complement. `is_signed` may be null for all unsigned.
 *
 * # Safety
 * `bits` must hold `count` entries, and so must `is_signed` when not null.
 */
enum QmStatus qm_space_new(const uint32_t *bits,
                           const uint8_t *is_signed,
                           size_t count,
                           struct QmSpace **out);

/**
 * Text such as `y1=1 y2=16..17`. Free with `qm_string_free`.
 *
 * # Safety
 * `space` must be a live handle.
 */
enum QmStatus qm_space_describe(const struct QmSpace *space, char **out);

/**
 * Decoded range of field `index`.
 *
 * # Safety
 * `space` must be a live handle.
 */
enum QmStatus qm_space_range(const struct QmSpace *space,
                             size_t index,
                             int64_t *low,
                             int64_t *high);

/**
 * # Safety
 * `space` must come from this library and not have been freed.
 */
void qm_space_free(struct QmSpace *space);

/**
 * Mean shape measure over the space at modulus `2^exponent`, i.e. the
 * probability of measuring `z = 0`.
 *
 * # Safety
 * Handles must be live.
 */
enum QmStatus qm_expected_q(const struct QmData *data,
                            const struct QmModel *model,
                            const struct QmSpace *space,
                            uint32_t exponent,
                            double *out);

/**
 * Run the full trimming loop in exact mode with the given threshold and
 * default sensitivity band.
 *
 * # Safety
 * Handles must be live.
 */
enum QmStatus qm_fit_run(const struct QmData *data,
                         const struct QmModel *model,
                         const struct QmSpace *space,
                         double threshold,
                         struct QmReport **out);

/**
 * Copy of the trimmed space.
 *
 * # Safety
 * `report` must be a live handle.
 */
enum QmStatus qm_report_final_space(const struct QmReport *report, struct QmSpace **out);

/**
 * The report in the versioned text format. Free with `qm_string_free`.
 *
 * # Safety
 * `report` must be a live handle.
 */
enum QmStatus qm_report_to_text(const struct QmReport *report, char **out);

/**
 * # Safety
 * `report` must come from this library and not have been freed.
 */
void qm_report_free(struct QmReport *report);

/**
 * Closed-form `P(z = 0)` for linear regression at `N = L + K + r`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum QmStatus qm_p_zero_integral(int32_t r, double ystar, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QMODEL_H */
