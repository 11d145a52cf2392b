#ifndef POSEFUSE_H
#define POSEFUSE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_SHAPE = 3,
  PF_STATUS_CONFIG = 4,
  PF_STATUS_STREAM = 5,
  PF_STATUS_BAD_MAGIC = 6,
  PF_STATUS_BAD_VERSION = 7,
  PF_STATUS_TRUNCATED = 8,
  PF_STATUS_CRC_MISMATCH = 9,
  PF_STATUS_UNKNOWN_TYPE = 10,
  PF_STATUS_TRAILING_BYTES = 11,
  PF_STATUS_FACTORIZATION = 12,
  PF_STATUS_EVALUATION = 13,
  PF_STATUS_BUFFER_TOO_SMALL = 14,
  PF_STATUS_IO = 15,
  PF_STATUS_PANIC = 16,
  PF_STATUS_OTHER = 17,
} PfStatus;

/**
 * Opaque, validated pipeline configuration.
 */
typedef struct PfConfig PfConfig;

/**
 * Opaque Gaussian-process surrogate over the unit cube.
 */
typedef struct PfGp PfGp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pf_last_error_message(void);

/**
 * CRC-32 (IEEE) of `len` bytes; null with `len == 0` is accepted.
 */
uint32_t pf_crc32(const uint8_t *data, uintptr_t len);

/**
 * Frames a payload. `msg_type` is 1 (camera), 2 (imu) or 3 (end of stream).
 */
enum PfStatus pf_encode_message(uint8_t msg_type,
                                const uint8_t *payload,
                                uintptr_t payload_len,
                                uint8_t *out,
                                uintptr_t out_cap,
                                uintptr_t *out_len);

/**
 * Validates one complete message and copies out its payload.
 */
enum PfStatus pf_decode_message(const uint8_t *data,
                                uintptr_t len,
                                uint8_t *msg_type,
                                uint8_t *payload,
                                uintptr_t payload_cap,
                                uintptr_t *payload_len);

/**
 * Ranked-list average precision: `hits[i]` is non-zero when the i-th
 * detection (in descending score order) is a true positive.
 */
enum PfStatus pf_average_precision(const uint8_t *hits,
                                   uintptr_t n,
                                   uintptr_t ground_truth,
                                   double *out);

enum PfStatus pf_gp_new(double length_scale,
                        double signal_variance,
                        double noise_variance,
                        uintptr_t dim,
                        struct PfGp **out);

void pf_gp_free(struct PfGp *gp);

/**
 * Adds an observation; `x` points at `dim` coordinates in `[0, 1]`.
 */
enum PfStatus pf_gp_add(struct PfGp *gp, const double *x, double y);

uintptr_t pf_gp_len(const struct PfGp *gp);

enum PfStatus pf_gp_posterior(const struct PfGp *gp,
                              const double *x,
                              double *mean,
                              double *variance);

enum PfStatus pf_gp_expected_improvement(const struct PfGp *gp,
                                         const double *x,
                                         double f_best,
                                         double *out);

/**
 * Parses a JSON config; a null `json` yields the defaults.
 */
enum PfStatus pf_config_from_json(const char *json, struct PfConfig **out);

void pf_config_free(struct PfConfig *cfg);

/**
 * Serialized config as UTF-8 JSON (no terminator).
 */
enum PfStatus pf_config_to_json(const struct PfConfig *cfg,
                                uint8_t *out,
                                uintptr_t out_cap,
                                uintptr_t *out_len);

enum PfStatus pf_config_set_seed(struct PfConfig *cfg, uint64_t seed);

/**
 * Runs the batch pipeline on a scene manifest and writes the skeleton,
 * action and metrics files into `output_dir`. `map` receives the mean AP,
 * or NaN when the scene carries no ground truth.
 */
enum PfStatus pf_run_manifest(const struct PfConfig *cfg,
                              const char *manifest,
                              const char *output_dir,
                              double *map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSEFUSE_H */
