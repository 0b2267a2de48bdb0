/* DeProCams C API: differentiable projector-camera pipeline.
 *
 * All functions return a dpc_status; DPC_OK (0) means success. On failure,
 * dpc_last_error() returns a message describing what went wrong (the buffer
 * is thread-local and valid until the next failing call on that thread).
 * File-path arguments use the dataset layout documented in the README.
 */
#ifndef DEPROCAMS_H
#define DEPROCAMS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dpc_status {
  DPC_OK = 0,
  DPC_ERR_IO = 1,        /* missing or unreadable file */
  DPC_ERR_PARSE = 2,     /* malformed JSON / PNG / PFM / checkpoint */
  DPC_ERR_SHAPE = 3,     /* dimension mismatch */
  DPC_ERR_CONFIG = 4,    /* invalid option value or unknown key */
  DPC_ERR_GEOMETRY = 5,  /* degenerate calibration or geometry */
  DPC_ERR_VERSION = 6,   /* checkpoint version mismatch */
  DPC_ERR_NUMERIC = 7,   /* NaN abort or divergence */
  DPC_ERR_TASK = 8,      /* e.g. empty displayable region */
  DPC_ERR_INTERNAL = 9
} dpc_status;

/* Opaque handle for a trained model loaded in memory. */
typedef struct dpc_model dpc_model;

const char* dpc_version(void);
const char* dpc_last_error(void);

/* Renders a synthetic scene dataset ("plane", "slant30", "step", "sphere",
 * "waves") into out_dir. options_json may be NULL; recognized keys:
 *   cam_h, cam_w, prj_h, prj_w (ints), gamma, noise_std (numbers).
 */
dpc_status dpc_simulate(const char* scene_name, const char* out_dir, int train_count,
                        int test_count, uint64_t seed, const char* options_json);

/* Trains on a dataset directory and writes a model checkpoint.
 * config_json may be NULL for the defaults; see the README for keys.
 */
dpc_status dpc_train(const char* data_dir, const char* model_path, const char* config_json);

dpc_status dpc_model_open(const char* model_path, dpc_model** out_model);
void dpc_model_close(dpc_model* model);

/* JSON description of the loaded model (sizes, calibration). */
dpc_status dpc_model_info(const dpc_model* model, char* buf, size_t buf_size);

/* Predicts the camera view of pattern_png and writes it to out_png. */
dpc_status dpc_relight(dpc_model* model, const char* pattern_png, const char* out_png);

/* Optimizes a projector input so its projection matches target_png
 * (projector-sized); writes the compensation image to out_png. config_json
 * may be NULL; keys: lr, iterations, saturation_weight, w_smooth.
 */
dpc_status dpc_compensate(dpc_model* model, const char* target_png, const char* out_png,
                          const char* config_json);

/* Writes <prefix>depth.pfm, <prefix>normal.pfm and <prefix>cloud.ply with
 * metric depth = (1 / inverse_depth) * t_norm.
 */
dpc_status dpc_reconstruct(dpc_model* model, double t_norm, const char* out_prefix);

/* Evaluates the model on a dataset's test split and writes a metrics CSV. */
dpc_status dpc_evaluate(dpc_model* model, const char* data_dir, const char* out_csv);

/* Finite-difference verification of every autodiff primitive and the full
 * depth->mask->shading chain. Returns DPC_OK only if all checks pass; prints
 * one line per check to stdout when verbose is nonzero.
 */
dpc_status dpc_gradcheck(uint64_t seed, int verbose);

#ifdef __cplusplus
}
#endif

#endif /* DEPROCAMS_H */
