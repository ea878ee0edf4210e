#ifndef FMQKD_H
#define FMQKD_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FmqkdStatus {
  FMQKD_STATUS_OK = 0,
  FMQKD_STATUS_NULL_POINTER = 1,
  FMQKD_STATUS_INVALID_ARGUMENT = 2,
  FMQKD_STATUS_CONFIG = 3,
  FMQKD_STATUS_CHANNEL = 4,
  FMQKD_STATUS_IO = 5,
  FMQKD_STATUS_PROTOCOL = 6,
  FMQKD_STATUS_UNDEFINED_RATE = 7,
  FMQKD_STATUS_KEY_FILE = 8,
  FMQKD_STATUS_BUFFER_TOO_SMALL = 9,
  FMQKD_STATUS_PANIC = 10,
} FmqkdStatus;

/**
 * Session parameters and channel mode.
 */
typedef struct FmqkdConfig FmqkdConfig;

/**
 * Outcome of a completed session.
 */
typedef struct FmqkdResult FmqkdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message for this thread into `buf` as a
 * NUL-terminated string. `needed` receives the full size including the
 * terminator; a short buffer gets a truncated copy and BUFFER_TOO_SMALL.
 */
enum FmqkdStatus fmqkd_last_error(char *buf, size_t len, size_t *needed);

/**
 * Library version, a static NUL-terminated string.
 */
const char *fmqkd_version(void);

/**
 * A config with the default parameters, in-process channel.
 */
enum FmqkdStatus fmqkd_config_new(struct FmqkdConfig **out);

/**
 * Parse `key = value` config text. Relative key-file paths are taken as is.
 */
enum FmqkdStatus fmqkd_config_parse(const char *text, struct FmqkdConfig **out);

void fmqkd_config_free(struct FmqkdConfig *cfg);

enum FmqkdStatus fmqkd_config_set_pulses(struct FmqkdConfig *cfg, uint64_t n_pulses);

enum FmqkdStatus fmqkd_config_set_mu(struct FmqkdConfig *cfg, double mu_pair);

enum FmqkdStatus fmqkd_config_set_seeds(struct FmqkdConfig *cfg,
                                        uint64_t alice,
                                        uint64_t bob,
                                        uint64_t physics);

/**
 * 0 selects BB92, 1 selects BB84.
 */
enum FmqkdStatus fmqkd_config_set_variant(struct FmqkdConfig *cfg, uint8_t variant);

enum FmqkdStatus fmqkd_config_set_detector(struct FmqkdConfig *cfg,
                                           double efficiency,
                                           double dark_prob);

enum FmqkdStatus fmqkd_config_set_disclosure(struct FmqkdConfig *cfg, double fraction);

/**
 * `"in_process"` or `"socket:host:port"`; port 0 picks a free port.
 */
enum FmqkdStatus fmqkd_config_set_channel(struct FmqkdConfig *cfg, const char *mode);

/**
 * Run a session with both stations in this process.
 */
enum FmqkdStatus fmqkd_run_session(const struct FmqkdConfig *cfg, struct FmqkdResult **out);

void fmqkd_result_free(struct FmqkdResult *res);

/**
 * Counts from a finished session. Any out pointer may be null.
 */
enum FmqkdStatus fmqkd_result_counts(const struct FmqkdResult *res,
                                     uint64_t *clicks,
                                     uint64_t *sifted_bits,
                                     uint64_t *mismatches);

/**
 * Error rate over the full sifted key; UNDEFINED_RATE when it is empty.
 */
enum FmqkdStatus fmqkd_result_error_rate(const struct FmqkdResult *res, double *out);

enum FmqkdStatus fmqkd_result_sift_rate(const struct FmqkdResult *res, double *out);

/**
 * Copy a sifted key: `party` 0 for Alice, 1 for Bob. `len` receives the
 * bit count; pass a null `buf` to query it.
 */
enum FmqkdStatus fmqkd_result_sifted_key(const struct FmqkdResult *res,
                                         uint8_t party,
                                         uint8_t *buf,
                                         size_t cap,
                                         size_t *len);

enum FmqkdStatus fmqkd_visibility_from_extinction_db(double extinction_db, double *out);

enum FmqkdStatus fmqkd_er_opt_from_visibility(double visibility, double *out);

enum FmqkdStatus fmqkd_click_probability(double mu_eff,
                                         double efficiency,
                                         double dark_prob,
                                         double *out);

/**
 * Detector-induced error rate for pairs of `mu_pair` photons behind
 * `loss_db` of loss.
 */
enum FmqkdStatus fmqkd_er_det_analytic(double mu_pair,
                                       double loss_db,
                                       double efficiency,
                                       double dark_prob,
                                       double visibility,
                                       double *out);

/**
 * Wire bytes of a DETECTIONS frame. `written` receives the frame size;
 * pass a null `buf` to query it.
 */
enum FmqkdStatus fmqkd_encode_detections(const uint64_t *indices,
                                         size_t count,
                                         uint8_t *buf,
                                         size_t cap,
                                         size_t *written);

/**
 * Write `bits` (one per byte, 0 or 1) as a key file.
 */
enum FmqkdStatus fmqkd_write_key_file(const char *path, const uint8_t *bits, size_t count);

/**
 * Read a key file. `len` receives the bit count; pass a null `buf` to
 * query it.
 */
enum FmqkdStatus fmqkd_read_key_file(const char *path, uint8_t *buf, size_t cap, size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FMQKD_H */
