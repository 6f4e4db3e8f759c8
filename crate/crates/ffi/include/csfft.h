#ifndef CSFFT_H
#define CSFFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsfftStatus {
  CSFFT_STATUS_OK = 0,
  CSFFT_STATUS_NULL_POINTER = 1,
  CSFFT_STATUS_CONFIG = 2,
  CSFFT_STATUS_INFEASIBLE = 3,
  CSFFT_STATUS_DOMAIN = 4,
  CSFFT_STATUS_BUDGET = 5,
  CSFFT_STATUS_RANK_DEFICIENT = 6,
  CSFFT_STATUS_INVARIANT = 7,
  CSFFT_STATUS_IO = 8,
  CSFFT_STATUS_OUT_OF_RANGE = 9,
  CSFFT_STATUS_PANIC = 10,
} CsfftStatus;

typedef struct CsfftConfig CsfftConfig;

typedef struct CsfftReport CsfftReport;

typedef struct CsfftSignal CsfftSignal;

// `v = re + i·im` at frequency `f` Hz.
typedef struct CsfftTone {
  double f;
  double re;
  double im;
} CsfftTone;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *csfft_last_error(void);

// Static, nul-terminated library version.
const char *csfft_version(void);

// Default recovery configuration.
struct CsfftConfig *csfft_config_new(void);

// Parses a JSON recovery config; missing fields take their defaults.
//
// # Safety
// `json` must be a valid nul-terminated string and `out` a valid pointer.
enum CsfftStatus csfft_config_from_json(const char *json, struct CsfftConfig **out);

// # Safety
// `cfg` must come from this library and not be used afterwards.
void csfft_config_free(struct CsfftConfig *cfg);

// # Safety
// `cfg` must be a live handle.
enum CsfftStatus csfft_config_set_delta(struct CsfftConfig *cfg, double delta);

// # Safety
// `cfg` must be a live handle.
enum CsfftStatus csfft_config_set_alpha(struct CsfftConfig *cfg, double alpha);

// Shortest duration `recover` accepts for sparsity `k` and separation `eta`.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum CsfftStatus csfft_min_duration(const struct CsfftConfig *cfg,
                                    size_t k,
                                    double eta,
                                    double *out);

// Builds a signal from `n` tones on `[0, duration]` with band limit
// `band_limit`. `noise_variance > 0` adds complex Gaussian noise keyed by
// `noise_seed`.
//
// # Safety
// `tones` must point to `n` readable tones (or be null with `n == 0`) and
// `out` must be a valid pointer.
enum CsfftStatus csfft_signal_new(const struct CsfftTone *tones,
                                  size_t n,
                                  double eta,
                                  double duration,
                                  double band_limit,
                                  double noise_variance,
                                  uint64_t noise_seed,
                                  struct CsfftSignal **out);

// # Safety
// `sig` must come from this library and not be used afterwards.
void csfft_signal_free(struct CsfftSignal *sig);

// One metered sample `x(t)`.
//
// # Safety
// `sig` must be a live handle; `re` and `im` valid pointers.
enum CsfftStatus csfft_signal_sample(const struct CsfftSignal *sig,
                                     double t,
                                     double *re,
                                     double *im);

// Samples drawn so far.
//
// # Safety
// `sig` must be a live handle or null (returns 0).
uint64_t csfft_signal_samples_taken(const struct CsfftSignal *sig);

// Recovers `k` tones. `cfg` may be null for the defaults.
//
// # Safety
// `sig` must be a live handle, `cfg` live or null, `out` a valid pointer.
enum CsfftStatus csfft_recover(const struct CsfftSignal *sig,
                               size_t k,
                               const struct CsfftConfig *cfg,
                               uint64_t seed,
                               struct CsfftReport **out);

// # Safety
// `rep` must come from this library and not be used afterwards.
void csfft_report_free(struct CsfftReport *rep);

// Number of recovered tones.
//
// # Safety
// `rep` must be a live handle or null (returns 0).
size_t csfft_report_len(const struct CsfftReport *rep);

// # Safety
// `rep` must be a live handle and `out` a valid pointer.
enum CsfftStatus csfft_report_tone(const struct CsfftReport *rep,
                                   size_t index,
                                   struct CsfftTone *out);

// Samples the recovery consumed.
//
// # Safety
// `rep` must be a live handle or null (returns 0).
uint64_t csfft_report_samples_used(const struct CsfftReport *rep);

// The full report as JSON; free with [`csfft_string_free`]. Null on failure.
//
// # Safety
// `rep` must be a live handle.
char *csfft_report_to_json(const struct CsfftReport *rep);

// # Safety
// `s` must come from [`csfft_report_to_json`] or be null.
void csfft_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSFFT_H */
