#ifndef HWDEMAND_H
#define HWDEMAND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HwdStatus {
  HWD_STATUS_OK = 0,
  HWD_STATUS_NULL_POINTER = 1,
  HWD_STATUS_INVALID_ARGUMENT = 2,
  HWD_STATUS_PARSE = 3,
  HWD_STATUS_IO = 4,
  HWD_STATUS_NUMERIC = 5,
  HWD_STATUS_CHECKPOINT = 6,
  HWD_STATUS_PANIC = 99,
} HwdStatus;

/**
 * Opaque trained forecaster.
 */
typedef struct HwdModel HwdModel;

/**
 * Opaque regular one-minute temperature series.
 */
typedef struct HwdSeries HwdSeries;

typedef struct HwdMetrics {
  /**
   * Mean absolute percentage error as a ratio.
   */
  double mape;
  double rmse;
  double r2;
} HwdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *hwd_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *hwd_version(void);

/**
 * Parses `timestamp,t_mid` CSV text and forward-fills it onto a one-minute grid.
 */
enum HwdStatus hwd_series_from_csv(const char *csv_text,
                                   const char *household_id,
                                   struct HwdSeries **out);

enum HwdStatus hwd_series_len(const struct HwdSeries *series, size_t *out_len);

/**
 * UTC seconds of the first value.
 */
enum HwdStatus hwd_series_start(const struct HwdSeries *series, int64_t *out_start);

/**
 * Copies up to `capacity` values into `buffer`; `out_written` receives the
 * number copied. A buffer shorter than the series is an error.
 */
enum HwdStatus hwd_series_values(const struct HwdSeries *series,
                                 double *buffer,
                                 size_t capacity,
                                 size_t *out_written);

void hwd_series_free(struct HwdSeries *series);

/**
 * Loads a JSON checkpoint.
 */
enum HwdStatus hwd_model_load(const char *path, struct HwdModel **out);

enum HwdStatus hwd_model_save(const struct HwdModel *model, const char *path);

/**
 * Window length the model consumes; predictions start this many steps
 * after the input series.
 */
enum HwdStatus hwd_model_lookback(const struct HwdModel *model, size_t *out_lookback);

/**
 * Teacher-forced one-step forecast over `input`.
 */
enum HwdStatus hwd_model_predict(const struct HwdModel *model,
                                 const struct HwdSeries *input,
                                 struct HwdSeries **out);

void hwd_model_free(struct HwdModel *model);

/**
 * MAPE, RMSE and R² of `predicted` against `actual`, both of length `n`.
 */
enum HwdStatus hwd_metrics(const double *actual,
                           const double *predicted,
                           size_t n,
                           struct HwdMetrics *out);

/**
 * Shower events in `series` as CSV
 * (`household,start_iso8601,duration_min,peak_drop_c,score`).
 */
enum HwdStatus hwd_detect_events_csv(const struct HwdSeries *series,
                                     double contamination,
                                     uint64_t seed,
                                     char **out_csv);

/**
 * Weekly calendar JSON of the events in `series`, binned at a fixed UTC offset.
 */
enum HwdStatus hwd_calendar_json(const struct HwdSeries *series,
                                 double contamination,
                                 int32_t utc_offset_seconds,
                                 uint64_t seed,
                                 char **out_json);

/**
 * Releases a string returned by this library.
 */
void hwd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HWDEMAND_H */
