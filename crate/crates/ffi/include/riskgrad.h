#ifndef RISKGRAD_H
#define RISKGRAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_ARGUMENT = 1,
  RG_STATUS_INVALID_UTF8 = 2,
  RG_STATUS_IO = 3,
  RG_STATUS_INVALID_INPUT = 4,
  RG_STATUS_SHAPE = 5,
  RG_STATUS_DOMAIN = 6,
  RG_STATUS_UNSUPPORTED = 7,
  RG_STATUS_PANIC = 99,
} RgStatus;

typedef enum RgEffort {
  RG_EFFORT_MINOR = 0,
  RG_EFFORT_MILD = 1,
  RG_EFFORT_CRITICAL = 2,
} RgEffort;

/*
 Opaque handle to a loaded checkpoint.
 */
typedef struct RgModel RgModel;

typedef struct RgThresholds {
  double tau;
  double tau_low;
  double tau_high;
} RgThresholds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *rg_last_error(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void rg_string_free(char *s);

struct RgThresholds rg_thresholds_default(void);

/*
 Loads a JSON checkpoint into `*out`.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RgStatus rg_model_load(const char *path, struct RgModel **out);

/*
 Releases a model. NULL is ignored.

 # Safety
 `model` must come from [`rg_model_load`] and not have been freed.
 */
void rg_model_free(struct RgModel *model);

/*
 Number of risk categories, or 0 for NULL.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t rg_model_categories(const struct RgModel *model);

/*
 Feature dimension, or 0 for NULL.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t rg_model_input_dim(const struct RgModel *model);

/*
 Risk vector for a precomputed feature vector. `out_len` must equal
 [`rg_model_categories`].

 # Safety
 `features` must point to `len` doubles and `out` to `out_len` doubles.
 */
enum RgStatus rg_model_score_features(const struct RgModel *model,
                                      const double *features,
                                      size_t len,
                                      double *out,
                                      size_t out_len);

/*
 Featurizes `(prompt, response)` with the checkpoint's featurizer and
 scores it. Fails with `UNSUPPORTED` for embedding-trained checkpoints.

 # Safety
 Strings must be NUL-terminated; `out` must point to `out_len` doubles.
 */
enum RgStatus rg_model_score_text(const struct RgModel *model,
                                  const char *prompt,
                                  const char *response,
                                  double *out,
                                  size_t out_len);

/*
 Effort level of one risk intensity.

 # Safety
 `out` must be writable.
 */
enum RgStatus rg_effort_of(double d, struct RgThresholds thresholds, enum RgEffort *out);

/*
 Renders the textual gradient for `risk` with the default template.
 `names` holds `len` category names. `*out` receives a new string (empty
 when nothing is risky) to be freed with [`rg_string_free`].

 # Safety
 `risk` must point to `len` doubles, `names` to `len` NUL-terminated
 strings; `out` must be writable.
 */
enum RgStatus rg_textgrad_render(const double *risk,
                                 const char *const *names,
                                 size_t len,
                                 struct RgThresholds thresholds,
                                 char **out);

/*
 `KL(Beta(alpha, beta) ‖ Beta(1, 1))`.

 # Safety
 `out` must be writable.
 */
enum RgStatus rg_kl_beta(double alpha, double beta, double *out);

/*
 Digamma for `x > 0`.

 # Safety
 `out` must be writable.
 */
enum RgStatus rg_digamma(double x, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKGRAD_H */
