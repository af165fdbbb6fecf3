#ifndef COGD2D_H
#define COGD2D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Cogd2dClass {
  COGD2D_CLASS_BS = 0,
  COGD2D_CLASS_D2D = 1,
} Cogd2dClass;

typedef enum Cogd2dMetric {
  COGD2D_METRIC_QUEUE_LENGTH = 0,
  COGD2D_METRIC_DELAY = 1,
} Cogd2dMetric;

typedef enum Cogd2dStatus {
  COGD2D_STATUS_OK = 0,
  COGD2D_STATUS_NULL_POINTER = 1,
  COGD2D_STATUS_INVALID_UTF8 = 2,
  COGD2D_STATUS_INVALID_CONFIG = 3,
  COGD2D_STATUS_PARSE = 4,
  COGD2D_STATUS_UNSTABLE = 5,
  COGD2D_STATUS_NUMERICAL = 6,
  COGD2D_STATUS_EMPTY = 7,
  COGD2D_STATUS_IO = 8,
  COGD2D_STATUS_DOMAIN = 9,
  COGD2D_STATUS_PANIC = 10,
} Cogd2dStatus;

/**
 * Scenario parameters.
 */
typedef struct Cogd2dConfig Cogd2dConfig;

/**
 * A probability mass function on `0..len`.
 */
typedef struct Cogd2dPmf Cogd2dPmf;

/**
 * Pooled result of a simulation run.
 */
typedef struct Cogd2dReport Cogd2dReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next fallible call on the same thread.
 */
const char *cogd2d_last_error(void);

/**
 * The reference scenario.
 */
struct Cogd2dConfig *cogd2d_config_default(void);

/**
 * Parses a `key = value` config file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum Cogd2dStatus cogd2d_config_from_file(const char *path, struct Cogd2dConfig **out);

/**
 * Parses config text in the `key = value` format.
 *
 * # Safety
 * `src` must be a nul-terminated string and `out` writable.
 */
enum Cogd2dStatus cogd2d_config_from_str(const char *src, struct Cogd2dConfig **out);

/**
 * Sets one field by name, e.g. `("request_rate", "0.1")`.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * nul-terminated strings.
 */
enum Cogd2dStatus cogd2d_config_set(struct Cogd2dConfig *cfg, const char *key, const char *value);

/**
 * Reads one numeric field by name.
 *
 * # Safety
 * `cfg` must come from this library, `key` must be nul-terminated and
 * `out` writable.
 */
enum Cogd2dStatus cogd2d_config_get(const struct Cogd2dConfig *cfg, const char *key, double *out);

/**
 * Checks every config invariant.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum Cogd2dStatus cogd2d_config_validate(const struct Cogd2dConfig *cfg);

/**
 * # Safety
 * `cfg` must come from this library or be null; it must not be used
 * afterwards.
 */
void cogd2d_config_free(struct Cogd2dConfig *cfg);

/**
 * Fractions of requests served locally, by D2D and by BSs.
 *
 * # Safety
 * `cfg` must come from this library; the outputs must be writable.
 */
enum Cogd2dStatus cogd2d_subset_split(const struct Cogd2dConfig *cfg,
                                      double *local,
                                      double *d2d,
                                      double *bs);

/**
 * Probability that a non-caching user associates with the D2D tier.
 *
 * # Safety
 * `cfg` must come from this library and `out` writable.
 */
enum Cogd2dStatus cogd2d_d2d_assoc_prob(const struct Cogd2dConfig *cfg, double *out);

/**
 * Analytic PMF of `metric` at steady nodes of `class`. Delay PMFs are
 * seen by a random request, queue-length PMFs by a random node.
 *
 * # Safety
 * `cfg` must come from this library and `out` writable.
 */
enum Cogd2dStatus cogd2d_analytic_pmf(const struct Cogd2dConfig *cfg,
                                      enum Cogd2dClass class_,
                                      enum Cogd2dMetric metric,
                                      struct Cogd2dPmf **out);

/**
 * Support size; 0 for a null handle.
 *
 * # Safety
 * `pmf` must come from this library or be null.
 */
size_t cogd2d_pmf_len(const struct Cogd2dPmf *pmf);

/**
 * `P(X = n)`; 0 outside the support or for a null handle.
 *
 * # Safety
 * `pmf` must come from this library or be null.
 */
double cogd2d_pmf_get(const struct Cogd2dPmf *pmf, size_t n);

/**
 * Copies up to `len` masses into `buf` and returns how many were copied.
 *
 * # Safety
 * `pmf` must come from this library; `buf` must hold `len` doubles.
 */
size_t cogd2d_pmf_copy(const struct Cogd2dPmf *pmf, double *buf, size_t len);

/**
 * # Safety
 * `pmf` must come from this library or be null.
 */
double cogd2d_pmf_mean(const struct Cogd2dPmf *pmf);

/**
 * Probability of a stable node state behind an analytic PMF; 1 for
 * simulated PMFs.
 *
 * # Safety
 * `pmf` must come from this library or be null.
 */
double cogd2d_pmf_stable_mass(const struct Cogd2dPmf *pmf);

/**
 * Whether the node class carries no traffic.
 *
 * # Safety
 * `pmf` must come from this library or be null.
 */
bool cogd2d_pmf_is_degenerate(const struct Cogd2dPmf *pmf);

/**
 * # Safety
 * `pmf` must come from this library or be null; it must not be used
 * afterwards.
 */
void cogd2d_pmf_free(struct Cogd2dPmf *pmf);

/**
 * Runs `replications` replications of `slots` slots each with a 20%
 * warmup.
 *
 * # Safety
 * `cfg` must come from this library and `out` writable.
 */
enum Cogd2dStatus cogd2d_simulate(const struct Cogd2dConfig *cfg,
                                  uint64_t slots,
                                  size_t replications,
                                  struct Cogd2dReport **out);

/**
 * Steady fraction of `class` nodes and its 95% half-width.
 *
 * # Safety
 * `report` must come from this library; the outputs must be writable.
 */
enum Cogd2dStatus cogd2d_report_steady_fraction(const struct Cogd2dReport *report,
                                                enum Cogd2dClass class_,
                                                double *fraction,
                                                double *half_width);

/**
 * Empirical PMF of `metric` over steady `class` nodes.
 *
 * # Safety
 * `report` must come from this library and `out` writable.
 */
enum Cogd2dStatus cogd2d_report_pmf(const struct Cogd2dReport *report,
                                    enum Cogd2dClass class_,
                                    enum Cogd2dMetric metric,
                                    struct Cogd2dPmf **out);

/**
 * # Safety
 * `report` must come from this library or be null; it must not be used
 * afterwards.
 */
void cogd2d_report_free(struct Cogd2dReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGD2D_H */
