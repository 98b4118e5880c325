/* C API for the metano library: opaque handles, status codes, and
 * subcommand-level entry points. All functions return METANO_OK on success;
 * on failure, metano_last_error() describes the problem (thread-local). */
#ifndef METANO_METANO_H
#define METANO_METANO_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum metano_status {
    METANO_OK = 0,
    METANO_ERR_INVALID_ARGUMENT = 1,
    METANO_ERR_FORMAT = 2,
    METANO_ERR_DIVERGED = 3,
    METANO_ERR_INTERNAL = 4,
} metano_status;

const char* metano_version(void);
const char* metano_last_error(void);

/* ---- datasets -------------------------------------------------------- */

typedef struct metano_dataset metano_dataset;

/* family: 0 = reaction, 1 = diffusion */
metano_status metano_gen_task(int family, int dim, int m, uint64_t task_seed,
                              double amplitude, int n_context, int n_target,
                              uint64_t data_seed, metano_dataset** out);
metano_status metano_dataset_save(const metano_dataset* ds, const char* path);
metano_status metano_dataset_load(const char* path, metano_dataset** out);
metano_status metano_dataset_info(const metano_dataset* ds, int* family, int* dim,
                                  int* m, int* n_context, int* n_target);
void metano_dataset_free(metano_dataset* ds);

/* Generate the config's training/test task datasets into out_dir as
 * train-task-<t>.bin and test-task-<j>.bin. Existing files are refused
 * unless force is nonzero. */
metano_status metano_gen_data(const char* config_text, const char* out_dir, int force);

/* ---- end-to-end experiment ------------------------------------------- */

/* Runs the experiment described by key=value `config_text` and returns the
 * CSV report (caller frees with metano_string_free). Returns METANO_OK only
 * if every requested row was produced. */
metano_status metano_run_report(const char* config_text, char** report_out);
void metano_string_free(char* s);

/* ---- two-phase workflow ---------------------------------------------- */

/* Meta-train on the listed dataset files (their context sets) and write the
 * resulting state checkpoint. Training hyperparameters come from
 * `config_text`; adapt_layer: 0 = lift, 2 = projection. */
metano_status metano_meta_train(const char* config_text, const char* const* dataset_paths,
                                size_t n_paths, int adapt_layer, const char* out_state_path);

/* Adapt a meta-trained state on the first n_context context samples of the
 * dataset, optionally fine-tuning all groups; writes a model checkpoint and
 * reports the mean relative error on the dataset's target samples. */
metano_status metano_adapt(const char* config_text, const char* state_path,
                           const char* dataset_path, int n_context, int finetune,
                           const char* out_model_path, double* mean_rel_err_out);

/* Mean relative L2 error of a saved model on a dataset's target samples. */
metano_status metano_eval_checkpoint(const char* model_path, const char* dataset_path,
                                     double* mean_rel_err_out);

/* ---- diagnostics ------------------------------------------------------ */

/* Constructive solution-operator check on the exactly-represented affine
 * contraction map u <- u + alpha (g - u); fills the deviation report. */
metano_status metano_universality_check(int m_nodes, double alpha, int layers,
                                        double* iteration_dev, double* final_err,
                                        double* replication_dev, double* gpart_dev);

/* Finite-difference audit of the full network gradient on a seeded model. */
metano_status metano_grad_check(int dim, int m, int d_h, int layers, int k_max,
                                uint64_t seed, double epsilon, double* max_rel_out,
                                long* checked_out, long* skipped_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* METANO_METANO_H */
