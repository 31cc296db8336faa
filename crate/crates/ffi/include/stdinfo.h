#ifndef STDINFO_H
#define STDINFO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. `Ok` is zero; everything else is a failure.
 */
typedef enum StdinfoStatus {
  STDINFO_STATUS_OK = 0,
  STDINFO_STATUS_NULL_POINTER = 1,
  STDINFO_STATUS_INVALID_PARAMETER = 2,
  STDINFO_STATUS_OUT_OF_DOMAIN = 3,
  STDINFO_STATUS_DIVERGENT = 4,
  STDINFO_STATUS_UNSUPPORTED = 5,
  STDINFO_STATUS_DEGENERATE = 6,
  STDINFO_STATUS_BUDGET_EXCEEDED = 7,
  STDINFO_STATUS_NO_CONVERGENCE = 8,
  STDINFO_STATUS_PARSE = 9,
  STDINFO_STATUS_DIMENSION_MISMATCH = 10,
  /**
   * A result does not fit the C output type.
   */
  STDINFO_STATUS_OVERFLOW = 11,
  /**
   * A Rust panic was caught at the boundary.
   */
  STDINFO_STATUS_INTERNAL = 255,
} StdinfoStatus;

typedef enum StdinfoBasis {
  STDINFO_BASIS_SINE = 0,
  STDINFO_BASIS_COSINE = 1,
  STDINFO_BASIS_LEGENDRE = 2,
} StdinfoBasis;

/**
 * Opaque prefix of the decreasing rearrangement of a tensor spectrum.
 */
typedef struct StdinfoRanked StdinfoRanked;

/**
 * Opaque univariate spectrum.
 */
typedef struct StdinfoSpectrum StdinfoSpectrum;

/**
 * Spectral moments of a univariate spectrum.
 */
typedef struct StdinfoMoments {
  double lambda;
  double m;
  double m2;
  double sigma_sq;
  double lambda_tilde;
} StdinfoMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *stdinfo_version(void);

/**
 * Message for the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *stdinfo_last_error(void);

/**
 * `lambda(i)^2 = mu^2 i^{-2r} (ln(i+1))^{2q}` for `i >= 1`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum StdinfoStatus stdinfo_spectrum_power_log(double mu,
                                              double r,
                                              double q,
                                              double lambda0_sq,
                                              enum StdinfoBasis basis,
                                              struct StdinfoSpectrum **out);

/**
 * The Brownian motion spectrum with the sine basis.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum StdinfoStatus stdinfo_spectrum_brownian(struct StdinfoSpectrum **out);

/**
 * A finite spectrum given by `len` squared eigenvalues.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to writable storage.
 */
enum StdinfoStatus stdinfo_spectrum_explicit(const double *values,
                                             size_t len,
                                             double lambda0_sq,
                                             enum StdinfoBasis basis,
                                             struct StdinfoSpectrum **out);

/**
 * Builds a spectrum from the JSON object accepted by the command line
 * `--spectrum` flag. The basis defaults to sine when not given.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable storage.
 */
enum StdinfoStatus stdinfo_spectrum_from_json(const char *json, struct StdinfoSpectrum **out);

/**
 * # Safety
 * `s` must be null or a pointer returned by a spectrum constructor that
 * has not been freed.
 */
void stdinfo_spectrum_free(struct StdinfoSpectrum *s);

/**
 * `lambda(i)^2` for `i >= 1`. The constant mode is not indexed.
 *
 * # Safety
 * `s` must be a live spectrum and `out` writable.
 */
enum StdinfoStatus stdinfo_spectrum_eigenvalue_sq(const struct StdinfoSpectrum *s,
                                                  size_t i,
                                                  double *out);

/**
 * Spectral moments over `i >= 1`, or over `i >= 0` when
 * `include_constant` is true.
 *
 * # Safety
 * `s` must be a live spectrum and `out` writable.
 */
enum StdinfoStatus stdinfo_spectrum_moments(const struct StdinfoSpectrum *s,
                                            bool include_constant,
                                            struct StdinfoMoments *out);

/**
 * The `n` largest eigenvalues of the `d`-fold tensor product.
 *
 * # Safety
 * `s` must be a live spectrum and `out` writable.
 */
enum StdinfoStatus stdinfo_top_k(const struct StdinfoSpectrum *s,
                                 size_t d,
                                 size_t n,
                                 struct StdinfoRanked **out);

/**
 * # Safety
 * `r` must be null or a live pointer returned by [`stdinfo_top_k`].
 */
void stdinfo_ranked_free(struct StdinfoRanked *r);

/**
 * Number of entries held, which is below the requested count only when
 * the spectrum has fewer nonzero eigenvalues.
 *
 * # Safety
 * `r` must be null or live. Null yields 0.
 */
size_t stdinfo_ranked_len(const struct StdinfoRanked *r);

/**
 * # Safety
 * `r` must be live and `out` writable.
 */
enum StdinfoStatus stdinfo_ranked_value(const struct StdinfoRanked *r, size_t j, double *out);

/**
 * Copies the multi-index of entry `j` into `buf`, which must hold the
 * tensor dimension.
 *
 * # Safety
 * `r` must be live and `buf` must point to `buf_len` writable `u32`.
 */
enum StdinfoStatus stdinfo_ranked_index(const struct StdinfoRanked *r,
                                        size_t j,
                                        uint32_t *buf,
                                        size_t buf_len);

/**
 * Sum of the omitted eigenvalues after the first `m` of the `d`-fold
 * tensor product.
 *
 * # Safety
 * `s` must be live and `out` writable.
 */
enum StdinfoStatus stdinfo_tail_sum(const struct StdinfoSpectrum *s,
                                    size_t d,
                                    size_t m,
                                    double *out);

/**
 * Smallest number of tensor terms leaving a relative error of at most `eps`.
 *
 * # Safety
 * `s` must be live and `out` writable.
 */
enum StdinfoStatus stdinfo_cardinality(const struct StdinfoSpectrum *s,
                                       size_t d,
                                       double eps,
                                       uint64_t *out);

/**
 * Same count for the additive field of order `b` in `d` variables.
 *
 * # Safety
 * `s` must be live and `out` writable.
 */
enum StdinfoStatus stdinfo_additive_cardinality(const struct StdinfoSpectrum *s,
                                                size_t d,
                                                size_t b,
                                                double eps,
                                                uint64_t *out);

/**
 * The limit constant `q*` of the cardinality as the dimension grows.
 *
 * # Safety
 * `s` must be live and `out` writable.
 */
enum StdinfoStatus stdinfo_q_star(const struct StdinfoSpectrum *s, double eps, double *out);

/**
 * Explosion coefficient `V(f)` for `f` in `[0, 1]`, using the spectrum
 * including its constant mode.
 *
 * # Safety
 * `s` must be live and `out` writable.
 */
enum StdinfoStatus stdinfo_explosion(const struct StdinfoSpectrum *s, double f, double *out);

/**
 * Deviation radius exceeded with probability at most `gamma` by an error
 * of mean square `mean_sq`.
 *
 * # Safety
 * `out` must be writable.
 */
enum StdinfoStatus stdinfo_concentration_radius(double mean_sq, double gamma, double *out);

/**
 * Minimal total point count meeting error `eps` with failure probability
 * `gamma` under the rate `c0 N^{1-2r} (ln N)^{2r(beta+1)-1}`.
 *
 * # Safety
 * `out` must be writable.
 */
enum StdinfoStatus stdinfo_point_budget(double eps,
                                        double gamma,
                                        double c0,
                                        double r,
                                        double beta,
                                        uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STDINFO_H */
