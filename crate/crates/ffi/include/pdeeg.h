#ifndef PDEEG_H
#define PDEEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PdeegStatus {
  PDEEG_STATUS_OK = 0,
  PDEEG_STATUS_NULL_ARGUMENT = 1,
  PDEEG_STATUS_INVALID_UTF8 = 2,
  PDEEG_STATUS_IO = 3,
  PDEEG_STATUS_FORMAT = 4,
  PDEEG_STATUS_CONFIG = 5,
  PDEEG_STATUS_INVALID_INPUT = 6,
  /**
   * The data does not fit the request: unknown channels or labels,
   * missing signals, empty groups.
   */
  PDEEG_STATUS_DATA = 7,
  PDEEG_STATUS_DIVERGED = 8,
  PDEEG_STATUS_EMPTY_MASK = 9,
  PDEEG_STATUS_QUALITY_GATE = 10,
  PDEEG_STATUS_PANIC = 11,
} PdeegStatus;

/**
 * A trained classifier.
 */
typedef struct PdeegClassifier PdeegClassifier;

/**
 * A loaded experiment configuration.
 */
typedef struct PdeegConfig PdeegConfig;

/**
 * A set of preprocessed epochs with labels.
 */
typedef struct PdeegEpochs PdeegEpochs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or "" after a success.
 * Valid until the next call on the same thread.
 */
const char *pdeeg_last_error(void);

/**
 * Library version, a static string.
 */
const char *pdeeg_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pdeeg_string_free(char *s);

/**
 * Jensen-Shannon divergence in bits between two `n`-bin distributions.
 * Both must be non-negative and sum to 1.
 *
 * # Safety
 * `p` and `q` must point to `n` doubles; `out` to one.
 */
enum PdeegStatus pdeeg_js_divergence(const double *p, const double *q, size_t n, double *out);

/**
 * Built-in default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PdeegStatus pdeeg_config_default(struct PdeegConfig **out);

/**
 * Reads a TOML experiment configuration.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum PdeegStatus pdeeg_config_load(const char *path, struct PdeegConfig **out);

/**
 * Replaces the list of master seeds.
 *
 * # Safety
 * `cfg` must be a live handle; `seeds` must point to `n` values.
 */
enum PdeegStatus pdeeg_config_set_seeds(struct PdeegConfig *cfg, const uint64_t *seeds, size_t n);

/**
 * Sets the directory that run directories are created in.
 *
 * # Safety
 * `cfg` must be a live handle; `root` a NUL-terminated string.
 */
enum PdeegStatus pdeeg_config_set_output_root(struct PdeegConfig *cfg, const char *root);

/**
 * # Safety
 * `cfg` must come from this library and not be freed twice. Null is ignored.
 */
void pdeeg_config_free(struct PdeegConfig *cfg);

/**
 * Runs the configured experiment. On success `report_json` receives the
 * report as JSON, including a `run_dir` field; free it with
 * [`pdeeg_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle; `report_json` a valid pointer.
 */
enum PdeegStatus pdeeg_run_experiment(const struct PdeegConfig *cfg, char **report_json);

/**
 * Loads and preprocesses a dataset (directory or manifest) with the
 * configuration's preprocessing settings.
 *
 * # Safety
 * `cfg` must be a live handle; `dataset` a NUL-terminated string; `out` a
 * valid pointer.
 */
enum PdeegStatus pdeeg_preprocess_dataset(const struct PdeegConfig *cfg,
                                          const char *dataset,
                                          struct PdeegEpochs **out);

/**
 * Reads an epoch file written by `pdeeg preprocess` or `generate`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum PdeegStatus pdeeg_epochs_load(const char *path, struct PdeegEpochs **out);

/**
 * # Safety
 * `epochs` must be a live handle; `path` a NUL-terminated string.
 */
enum PdeegStatus pdeeg_epochs_save(const struct PdeegEpochs *epochs, const char *path);

/**
 * Number of epochs, channels and samples per epoch.
 *
 * # Safety
 * `epochs` must be a live handle; the outputs valid pointers.
 */
enum PdeegStatus pdeeg_epochs_shape(const struct PdeegEpochs *epochs,
                                    size_t *count,
                                    size_t *channels,
                                    size_t *samples);

/**
 * Copies the samples, epoch-major then channel then time, into `buf`,
 * which must hold exactly count × channels × samples doubles.
 *
 * # Safety
 * `epochs` must be a live handle; `buf` must point to `len` doubles.
 */
enum PdeegStatus pdeeg_epochs_copy_data(const struct PdeegEpochs *epochs, double *buf, size_t len);

/**
 * Writes each epoch's label, 0 for HC and 1 for PD.
 *
 * # Safety
 * `epochs` must be a live handle; `labels` must point to `len` bytes.
 */
enum PdeegStatus pdeeg_epochs_labels(const struct PdeegEpochs *epochs, uint8_t *labels, size_t len);

/**
 * # Safety
 * `epochs` must come from this library and not be freed twice. Null is
 * ignored.
 */
void pdeeg_epochs_free(struct PdeegEpochs *epochs);

/**
 * Reads a classifier checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum PdeegStatus pdeeg_classifier_load(const char *path, struct PdeegClassifier **out);

/**
 * Predicts a label per epoch, 0 for HC and 1 for PD.
 *
 * # Safety
 * Both handles must be live; `labels` must point to `len` bytes.
 */
enum PdeegStatus pdeeg_classifier_predict(const struct PdeegClassifier *model,
                                          const struct PdeegEpochs *epochs,
                                          uint8_t *labels,
                                          size_t len);

/**
 * # Safety
 * `model` must come from this library and not be freed twice. Null is
 * ignored.
 */
void pdeeg_classifier_free(struct PdeegClassifier *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDEEG_H */
