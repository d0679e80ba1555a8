/* C interface to the gradprop engine. All functions return a gp_status; on
 * failure gp_last_error() describes the problem for the calling thread. */
#ifndef GRADPROP_GRADPROP_H
#define GRADPROP_GRADPROP_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(GRADPROP_BUILDING_LIBRARY)
#    define GP_API __declspec(dllexport)
#  else
#    define GP_API __declspec(dllimport)
#  endif
#else
#  define GP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gp_status {
    GP_OK = 0,
    GP_ERR_INVALID_ARGUMENT = 1,
    GP_ERR_CONFIG = 2,
    GP_ERR_IO = 3,
    GP_ERR_NUMERIC = 4,
    GP_ERR_STATE = 5,
    GP_ERR_BUFFER_TOO_SMALL = 6,
    GP_ERR_INTERNAL = 7
} gp_status;

typedef enum gp_moment_mode { GP_MODE_PAPER = 0, GP_MODE_ORACLE = 1 } gp_moment_mode;

typedef struct gp_config gp_config;
typedef struct gp_model gp_model;

/* Receives one chunk of command output; `user` is passed through. */
typedef void (*gp_log_fn)(const char* text, void* user);

GP_API const char* gp_version(void);
/* Message for the most recent failure on this thread; "" if none. */
GP_API const char* gp_last_error(void);
GP_API const char* gp_status_string(gp_status status);

/* ---- configuration ---------------------------------------------------- */

GP_API gp_status gp_config_create(gp_config** out);
GP_API void gp_config_destroy(gp_config* cfg);
/* Applies a `[section]` / `key = value` file on top of the current values. */
GP_API gp_status gp_config_load_file(gp_config* cfg, const char* path);
/* key is "section.key", e.g. "sgd.lr". Unknown keys are rejected. */
GP_API gp_status gp_config_set(gp_config* cfg, const char* key, const char* value);
/* Copies the value including the terminating NUL. When `buf` is too small
 * GP_ERR_BUFFER_TOO_SMALL is returned and `*needed` holds the required size. */
GP_API gp_status gp_config_get(const gp_config* cfg, const char* key, char* buf, size_t buf_len, size_t* needed);

/* Runs predict, train, ablate, verify-moments or sweep. `*exit_code` receives
 * 0 ok, 1 usage/config error, 2 explosion detected, 3 oracle failure. Output
 * goes to `log` (stdout when NULL). */
GP_API gp_status gp_run_command(const gp_config* cfg, const char* command, gp_log_fn log, void* user,
                                int* exit_code);

/* ---- closed-form helpers ---------------------------------------------- */

GP_API gp_status gp_relu_moments(double a, gp_moment_mode mode, double* e_y, double* e_y2);
GP_API gp_status gp_kantorovich_bound(double c, double d, double* out);

/* ---- models ----------------------------------------------------------- */

/* Builds a network from the [net] settings of `cfg`, seeded by run.seed. */
GP_API gp_status gp_model_create(const gp_config* cfg, size_t input_dim, size_t num_classes, gp_model** out);
GP_API void gp_model_destroy(gp_model* model);
GP_API gp_status gp_model_num_blocks(const gp_model* model, size_t* out);
GP_API gp_status gp_model_num_classes(const gp_model* model, size_t* out);

/* Training-mode forward pass over a row-major batch (rows >= 2). Logits are
 * written row-major into `logits` (rows * num_classes entries). The pass is
 * kept for a following gp_model_backward call. */
GP_API gp_status gp_model_forward(gp_model* model, const double* inputs, size_t rows, size_t cols, double* logits);
/* Softmax cross-entropy against `labels` for the last forward batch and the
 * mean per-feature gradient variance at every block output (num_blocks
 * entries). With lr > 0 an SGD step is applied. Calling it without a
 * preceding forward pass is GP_ERR_STATE. */
GP_API gp_status gp_model_backward(gp_model* model, const int* labels, size_t rows, double lr, double* loss,
                                   double* block_grad_variance);

GP_API gp_status gp_model_save(const gp_model* model, const char* path);
GP_API gp_status gp_model_load(const char* path, gp_model** out);

#ifdef __cplusplus
}
#endif

#endif /* GRADPROP_GRADPROP_H */
