#ifndef MMF_H
#define MMF_H

/* C interface to the meta-learned matrix imputation engine. All functions
 * return a status code; on failure mmf_last_error() holds a thread-local
 * message valid until the next failing call on the same thread. Handles are
 * opaque and freed with the matching *_free function. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mmf_status {
    MMF_OK = 0,
    MMF_ERR_INVALID_ARGUMENT = 1,
    MMF_ERR_DIMENSION = 2,
    MMF_ERR_NUMERIC = 3,
    MMF_ERR_CONTRACT = 4,
    MMF_ERR_PARSE = 5,
    MMF_ERR_IO = 6,
    MMF_ERR_CONFIG = 7,
    MMF_ERR_SAMPLING = 8,
    MMF_ERR_FORMAT = 9,
    MMF_ERR_DIVERGED = 10,
    MMF_ERR_UNKNOWN = 11
} mmf_status;

typedef enum mmf_split {
    MMF_SPLIT_TRAIN = 0,
    MMF_SPLIT_VALID = 1,
    MMF_SPLIT_TEST = 2
} mmf_split;

const char* mmf_status_name(mmf_status status);
const char* mmf_last_error(void);

typedef struct mmf_dataset mmf_dataset;
typedef struct mmf_suite mmf_suite;
typedef struct mmf_model mmf_model;
typedef struct mmf_report mmf_report;

/* ---- datasets -------------------------------------------------------- */

/* Loads a rating triplet file (format: movielens_tab, movielens_dcolon, or
 * csv), partitions users and items into disjoint train/valid/test blocks by
 * the given fractions, and z-scores everything with the training block's
 * statistics. */
mmf_status mmf_dataset_from_file(const char* path, const char* format,
                                 double train_fraction, double valid_fraction,
                                 double test_fraction, uint64_t seed, mmf_dataset** out);

typedef struct mmf_synthetic_config {
    size_t train_tasks;
    size_t valid_tasks;
    size_t test_tasks;
    size_t rows;
    size_t cols;
    size_t rank;
    double density;
    double noise_std;
    double factor_spread;
    uint64_t seed;
} mmf_synthetic_config;

void mmf_synthetic_config_default(mmf_synthetic_config* cfg);
mmf_status mmf_dataset_synthetic(const mmf_synthetic_config* cfg, mmf_dataset** out);

/* Task collections serialize one file per split; a path may be NULL or empty
 * to skip that split (on load the split is then empty). */
mmf_status mmf_dataset_save(const mmf_dataset* ds, const char* train_path,
                            const char* valid_path, const char* test_path);
mmf_status mmf_dataset_load(const char* train_path, const char* valid_path,
                            const char* test_path, mmf_dataset** out);

mmf_status mmf_dataset_block_count(const mmf_dataset* ds, mmf_split split, size_t* out);
mmf_status mmf_dataset_block_shape(const mmf_dataset* ds, mmf_split split, size_t index,
                                   size_t* rows, size_t* cols, size_t* observed);
mmf_status mmf_dataset_norm_stats(const mmf_dataset* ds, double* mean, double* stddev);
void mmf_dataset_free(mmf_dataset* ds);

/* ---- episode suites --------------------------------------------------- */

/* Draws a fixed evaluation suite of episodes from one split: submatrices of
 * rows x cols whose observed entries are split into an adaptation part and a
 * held-out part (fraction `holdout`). */
mmf_status mmf_suite_make(const mmf_dataset* ds, mmf_split split, size_t count, size_t rows,
                          size_t cols, double holdout, uint64_t seed, mmf_suite** out);
mmf_status mmf_suite_from_taskset(const char* taskset_path, size_t count, size_t rows,
                                  size_t cols, double holdout, uint64_t seed,
                                  mmf_suite** out);
mmf_status mmf_suite_save(const mmf_suite* suite, const char* path);
mmf_status mmf_suite_load(const char* path, mmf_suite** out);
mmf_status mmf_suite_size(const mmf_suite* suite, size_t* out);
mmf_status mmf_suite_norm_stats(const mmf_suite* suite, double* mean, double* stddev);
void mmf_suite_free(mmf_suite* suite);

/* ---- meta-training ---------------------------------------------------- */

typedef struct mmf_train_config {
    size_t epochs;
    size_t batches_per_epoch;
    size_t batch_size;
    double outer_lr;
    size_t rows;
    size_t cols;
    double ratio; /* fraction of observed episode entries used for adaptation */
    double inner_eta;
    size_t inner_steps;
    double dropout_rate;
    uint64_t seed;
    size_t patience;
    size_t valid_episodes;
    size_t exml_layers;
    size_t channels;
    size_t ff_hidden;
    size_t ff_weight_layers;
    size_t factors;
    size_t workers;
} mmf_train_config;

void mmf_train_config_default(mmf_train_config* cfg);

/* Meta-trains on the dataset's train split with early stopping on the valid
 * split. Writes a tab-separated epoch log when epoch_log_path is non-NULL.
 * On MMF_ERR_DIVERGED the best finite model is still stored in *out and
 * mmf_last_error() describes what diverged. */
mmf_status mmf_train(const mmf_dataset* ds, const mmf_train_config* cfg,
                     const char* epoch_log_path, mmf_model** out);

/* ---- models ----------------------------------------------------------- */

mmf_status mmf_model_save(const mmf_model* model, const char* path);
mmf_status mmf_model_load(const char* path, mmf_model** out);
mmf_status mmf_model_norm_stats(const mmf_model* model, double* mean, double* stddev);
mmf_status mmf_model_inner_defaults(const mmf_model* model, double* eta, size_t* steps);

/* Imputes a raw (unnormalized) matrix: `values` and `mask` are row-major
 * rows x cols arrays, mask entries 0 or 1. Writes rows x cols denormalized
 * predictions to `out`. */
mmf_status mmf_model_impute(const mmf_model* model, const double* values, const double* mask,
                            size_t rows, size_t cols, double eta, size_t steps, double* out);
void mmf_model_free(mmf_model* model);

/* ---- evaluation reports ------------------------------------------------ */

/* NULL grid pointers fall back to the reference grids. */
typedef struct mmf_mf_config {
    size_t k;
    const double* weight_decay_grid;
    size_t weight_decay_count;
    const double* lr_grid;
    size_t lr_count;
    size_t max_iters;
    double init_scale;
    double rel_tol;
    double holdout;
    uint64_t seed;
} mmf_mf_config;

void mmf_mf_config_default(mmf_mf_config* cfg);

mmf_status mmf_report_new(mmf_report** out);

/* Scores one method (ours, mean, mf, prior_product) on every suite episode
 * and appends per-episode rows plus mean and standard-error rows under the
 * given method label and dataset name. `model` may be NULL for mean and mf;
 * `mf` may be NULL for the reference configuration. */
mmf_status mmf_report_eval(mmf_report* report, const mmf_model* model,
                           const mmf_suite* suite, const char* method, const char* label,
                           const char* dataset, double inner_eta, size_t inner_steps,
                           const mmf_mf_config* mf, size_t workers);

mmf_status mmf_report_row_count(const mmf_report* report, size_t* out);
mmf_status mmf_report_all_finite(const mmf_report* report, int* out);

/* Fetches an aggregate value (episode column "mean" or "stderr") for a
 * method label and metric ("test_mse" or "train_mse"). */
mmf_status mmf_report_aggregate(const mmf_report* report, const char* label,
                                const char* dataset, const char* metric,
                                const char* aggregate, double* out);

mmf_status mmf_report_save(const mmf_report* report, const char* path);
void mmf_report_free(mmf_report* report);

#ifdef __cplusplus
}
#endif

#endif /* MMF_H */
