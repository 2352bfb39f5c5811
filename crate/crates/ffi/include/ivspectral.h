#ifndef IVSPECTRAL_H
#define IVSPECTRAL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum IvsStatus {
  IVS_STATUS_OK = 0,
  IVS_STATUS_NULL_POINTER = 1,
  IVS_STATUS_CONFIG = 2,
  IVS_STATUS_DATA = 3,
  IVS_STATUS_RANK = 4,
  IVS_STATUS_PARAMETER = 5,
  IVS_STATUS_BUFFER_TOO_SMALL = 6,
  IVS_STATUS_PANIC = 7,
} IvsStatus;

// Regularization family.
typedef enum IvsSchemeKind {
  IVS_SCHEME_KIND_TIKHONOV = 0,
  IVS_SCHEME_KIND_SPECTRAL_CUTOFF = 1,
  IVS_SCHEME_KIND_PRINCIPAL_COMPONENTS = 2,
  IVS_SCHEME_KIND_LANDWEBER = 3,
} IvsSchemeKind;

// Opaque dataset handle.
typedef struct IvsDataset IvsDataset;

// A regularization scheme. `parameter` is the Tikhonov alpha, the
// spectral cut-off threshold or the Landweber step; `count` is the number
// of principal components or Landweber iterations.
typedef struct IvsScheme {
  enum IvsSchemeKind kind;
  double parameter;
  uint32_t count;
} IvsScheme;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ivs_version(void);

// Message of the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *ivs_last_error_message(void);

// Builds a dataset from `y` (n), `x` (n×g) and `z` (n×k), copying the data.
//
// # Safety
// The arrays must hold the stated number of doubles and `out` must be
// writable.
enum IvsStatus ivs_dataset_new(const double *y,
                               const double *x,
                               const double *z,
                               size_t n,
                               size_t g,
                               size_t k,
                               struct IvsDataset **out);

// Simulates a dataset from a TOML document with the DGP fields (`n`, `k`,
// `pi`, `design`, ...).
//
// # Safety
// `dgp_toml` must be a NUL-terminated string and `out` writable.
enum IvsStatus ivs_dataset_simulate(const char *dgp_toml, uint64_t seed, struct IvsDataset **out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must be null or a live handle from this library.
void ivs_dataset_free(struct IvsDataset *dataset);

// Writes n, g and k of a dataset. Any output pointer may be null.
//
// # Safety
// `dataset` must be a live handle; non-null outputs must be writable.
enum IvsStatus ivs_dataset_shape(const struct IvsDataset *dataset, size_t *n, size_t *g, size_t *k);

// OLS coefficients into `delta_out` (at least g values).
//
// # Safety
// `dataset` must be a live handle and `delta_out` must hold `len` doubles.
enum IvsStatus ivs_ols(const struct IvsDataset *dataset, double *delta_out, size_t len);

// 2SLS coefficients into `delta_out` (at least g values).
//
// # Safety
// `dataset` must be a live handle and `delta_out` must hold `len` doubles.
enum IvsStatus ivs_tsls(const struct IvsDataset *dataset, double *delta_out, size_t len);

// Regularized 2SLS coefficients into `delta_out` (at least g values).
//
// # Safety
// `dataset` must be a live handle and `delta_out` must hold `len` doubles.
enum IvsStatus ivs_tsls_regularized(const struct IvsDataset *dataset,
                                    struct IvsScheme scheme,
                                    double *delta_out,
                                    size_t len);

// Chooses the regularization parameter from an ascending `grid` by
// five-fold cross-validation of the first stage.
//
// # Safety
// `dataset` must be a live handle, `grid` must hold `grid_len` doubles and
// `out` must be writable.
enum IvsStatus ivs_select_alpha(const struct IvsDataset *dataset,
                                enum IvsSchemeKind kind,
                                const double *grid,
                                size_t grid_len,
                                struct IvsScheme *out);

// Number of coefficients with `|π_k| > c/√n`.
//
// # Safety
// `pi` must hold `k` doubles and `count_out` must be writable.
enum IvsStatus ivs_effective_count(const double *pi,
                                   size_t k,
                                   size_t n,
                                   double c,
                                   size_t *count_out);

// Eigenvalues of `Z'Z/n` in descending order (k values) and the ratio of
// the smallest to the largest.
//
// # Safety
// `dataset` must be a live handle, `eigenvalues_out` must hold `len`
// doubles and `flatness_out` must be null or writable.
enum IvsStatus ivs_covariance_spectrum(const struct IvsDataset *dataset,
                                       double *eigenvalues_out,
                                       size_t len,
                                       double *flatness_out);

// Runs a Monte Carlo scenario given as TOML and returns its statistics as a
// JSON string, to be released with [`ivs_string_free`].
//
// # Safety
// `scenario_toml` must be a NUL-terminated string and `json_out` writable.
enum IvsStatus ivs_run_scenario(const char *scenario_toml, char **json_out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library that has not been freed.
void ivs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVSPECTRAL_H */
