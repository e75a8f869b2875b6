/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef AERS_H
#define AERS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AersStatus {
  AERS_STATUS_OK = 0,
  AERS_STATUS_NULL_POINTER = 1,
  AERS_STATUS_INVALID_ARGUMENT = 2,
  AERS_STATUS_IO = 3,
  AERS_STATUS_PARSE = 4,
  AERS_STATUS_SCHEMA = 5,
  AERS_STATUS_MODEL = 6,
  AERS_STATUS_STATS = 7,
  AERS_STATUS_PANIC = 99,
} AersStatus;

/*
 Ranking metric for [`aers_top_n`].
 */
typedef enum AersMetric {
  AERS_METRIC_QSUM = 0,
  AERS_METRIC_QMAX = 1,
  AERS_METRIC_QAVERAGE = 2,
} AersMetric;

/*
 Subject weighting for [`aers_store_build_from_dir`].
 */
typedef enum AersWeighting {
  AERS_WEIGHTING_ADDITIVE = 0,
  AERS_WEIGHTING_MULTIPLICATIVE = 1,
} AersWeighting;

typedef struct AersAlertList AersAlertList;

typedef struct AersMeasuresList AersMeasuresList;

/*
 Drug-name by quarter count store.
 */
typedef struct AersStore AersStore;

/*
 Store dimensions and totals.
 */
typedef struct AersStoreInfo {
  uint64_t drug_names;
  uint64_t quarters;
  uint64_t total_subjects;
  uint64_t total_events;
} AersStoreInfo;

/*
 Corpus-wide statistics of per-drug totals. Absent values are NaN.
 */
typedef struct AersCorpusSummary {
  uint64_t n_drug_names;
  uint64_t sum;
  double mean;
  double se_mean;
  double sd;
  double variance;
  double skewness;
  double se_skewness;
  double kurtosis;
  double se_kurtosis;
  uint64_t range;
  uint64_t min;
  uint64_t max;
  double median;
  uint64_t mode;
  double p25;
  double p50;
  double p75;
} AersCorpusSummary;

/*
 One row of [`aers_top_n`]. `drug` is owned by the list.
 */
typedef struct AersMeasures {
  const char *drug;
  uint64_t qsum;
  uint64_t qmin;
  uint64_t qmax;
  double qmedian;
  double qaverage;
  double qsd;
  uint32_t active_quarters;
} AersMeasures;

/*
 One row of [`aers_detect`]. `drug` is owned by the list.
 */
typedef struct AersAlert {
  const char *drug;
  uint16_t year;
  uint8_t quarter;
  uint64_t count;
  double baseline_median;
  double baseline_sd;
  double score;
  double fold_change;
} AersAlert;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failure on this thread; empty after a success.
 Valid until the next library call on the same thread.
 */
const char *aers_last_error_message(void);

/*
 Library version, static storage.
 */
const char *aers_version(void);

/*
 Loads a snapshot CSV (with its `.meta.json` beside it).

 # Safety
 `csv_path` must be a NUL-terminated string; `out` must be writable.
 */
enum AersStatus aers_store_import(const char *csv_path, struct AersStore **out);

/*
 Ingests every quarter found in `dir` using the default schema, or the
 one named by `AERS_SCHEMA`.

 # Safety
 `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum AersStatus aers_store_build_from_dir(const char *dir,
                                          uint32_t weighting,
                                          struct AersStore **out);

/*
 Writes the snapshot CSV and its `.meta.json`.

 # Safety
 `store` must come from this library; `csv_path` must be NUL-terminated.
 */
enum AersStatus aers_store_export(const struct AersStore *store, const char *csv_path);

/*
 # Safety
 `store` must come from this library and not be used afterwards. Null is
 ignored.
 */
void aers_store_free(struct AersStore *store);

/*
 # Safety
 `store` must come from this library; `out` must be writable.
 */
enum AersStatus aers_store_info(const struct AersStore *store, struct AersStoreInfo *out);

/*
 Count for one drug (normalized before lookup) in one quarter; 0 when
 absent.

 # Safety
 `store` must come from this library; `drug` must be NUL-terminated;
 `out` must be writable.
 */
enum AersStatus aers_store_count(const struct AersStore *store,
                                 const char *drug,
                                 uint16_t year,
                                 uint8_t quarter,
                                 uint64_t *out);

/*
 # Safety
 `store` must come from this library; `out` must be writable.
 */
enum AersStatus aers_corpus_summary(const struct AersStore *store, struct AersCorpusSummary *out);

/*
 # Safety
 `store` must come from this library; `out` must be writable.
 */
enum AersStatus aers_top_n(const struct AersStore *store,
                           size_t n,
                           uint32_t metric,
                           struct AersMeasuresList **out);

/*
 # Safety
 `list` must come from [`aers_top_n`] or be null.
 */
size_t aers_measures_len(const struct AersMeasuresList *list);

/*
 # Safety
 `list` must come from [`aers_top_n`]; `out` must be writable.
 */
enum AersStatus aers_measures_get(const struct AersMeasuresList *list,
                                  size_t index,
                                  struct AersMeasures *out);

/*
 # Safety
 `list` must come from [`aers_top_n`] and not be used afterwards. Null
 is ignored.
 */
void aers_measures_free(struct AersMeasuresList *list);

/*
 Outbreak alerts, sorted by descending score.

 # Safety
 `store` must come from this library; `out` must be writable.
 */
enum AersStatus aers_detect(const struct AersStore *store,
                            double theta,
                            uint64_t min_count,
                            size_t min_active,
                            struct AersAlertList **out);

/*
 # Safety
 `list` must come from [`aers_detect`] or be null.
 */
size_t aers_alerts_len(const struct AersAlertList *list);

/*
 # Safety
 `list` must come from [`aers_detect`]; `out` must be writable.
 */
enum AersStatus aers_alerts_get(const struct AersAlertList *list,
                                size_t index,
                                struct AersAlert *out);

/*
 # Safety
 `list` must come from [`aers_detect`] and not be used afterwards. Null
 is ignored.
 */
void aers_alerts_free(struct AersAlertList *list);

/*
 Standard errors of skewness and kurtosis for sample size `n >= 4`.

 # Safety
 Both outputs must be writable.
 */
enum AersStatus aers_standard_errors(uint64_t n, double *se_skewness, double *se_kurtosis);

/*
 Percentile `p` in `[0, 1]` of `len` values.

 # Safety
 `values` must point to `len` readable doubles; `out` must be writable.
 */
enum AersStatus aers_percentile(const double *values, size_t len, double p, double *out);

/*
 Normalized form of a raw drug name. Release the result with
 [`aers_string_free`].

 # Safety
 `raw` must be NUL-terminated; `out` must be writable.
 */
enum AersStatus aers_normalize_drug_name(const char *raw, char **out);

/*
 # Safety
 `s` must come from this library and not be used afterwards. Null is
 ignored.
 */
void aers_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AERS_H */
