/* C API for the SEPI-TFPNet core-loss predictor.
 *
 * All functions return sepi_status; outputs go through pointer arguments.
 * On failure, sepi_last_error() returns a thread-local message describing
 * what went wrong. Handles are opaque and must be released with their
 * matching *_free function (free functions accept NULL).
 */
#ifndef SEPITFP_H
#define SEPITFP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  SEPI_OK = 0,
  SEPI_ERR_INVALID_ARGUMENT = 1, /* bad pointer, shape, or domain violation */
  SEPI_ERR_CONFIG = 2,           /* invalid or unknown configuration */
  SEPI_ERR_DATA = 3,             /* file / format / fitting problems */
  SEPI_ERR_NUMERIC = 4,          /* non-finite values encountered */
  SEPI_ERR_INTERNAL = 5
} sepi_status;

typedef enum {
  SEPI_BRANCH_STEINMETZ = 0,
  SEPI_BRANCH_IGSE = 1
} sepi_branch;

typedef struct sepi_dataset sepi_dataset;
typedef struct sepi_params sepi_params; /* fitted Steinmetz coefficients */
typedef struct sepi_config sepi_config;
typedef struct sepi_model sepi_model;
typedef struct sepi_report sepi_report;
typedef struct sepi_grid_result sepi_grid_result;

const char* sepi_version(void);
const char* sepi_last_error(void);

/* ---- dataset ---------------------------------------------------------- */

/* Loads the four aligned MagNet-style CSV files from dir. */
sepi_status sepi_dataset_load_magnet(const char* dir, sepi_dataset** out);
/* Writes a dataset back out in the same layout. */
sepi_status sepi_dataset_save_magnet(const sepi_dataset* ds, const char* dir);
/* Synthetic dataset with iGSE labels drawn from (k, a, b). */
sepi_status sepi_dataset_synth(size_t n, double k, double a, double b, double noise_rel,
                               uint64_t seed, sepi_dataset** out);
sepi_status sepi_dataset_size(const sepi_dataset* ds, size_t* out);
/* Per-sample accessors; waveform buffer must hold 1024 doubles. */
sepi_status sepi_dataset_sample(const sepi_dataset* ds, size_t index, double* waveform,
                                double* freq, double* temp, double* loss);
/* Seeded shuffle then contiguous partition into three new datasets. */
sepi_status sepi_dataset_split(const sepi_dataset* ds, double f_train, double f_val,
                               double f_test, uint64_t seed, sepi_dataset** train,
                               sepi_dataset** val, sepi_dataset** test);
void sepi_dataset_free(sepi_dataset* ds);

/* ---- empirical prior -------------------------------------------------- */

sepi_status sepi_params_make(double k, double a, double b, sepi_params** out);
/* OLS fit of ln P = ln k + a ln f + b ln Bm over the labeled dataset. */
sepi_status sepi_params_fit(const sepi_dataset* ds, sepi_params** out);
sepi_status sepi_params_get(const sepi_params* p, double* k, double* a, double* b,
                            double* ki);
sepi_status sepi_params_save(const sepi_params* p, const char* path);
sepi_status sepi_params_load(const char* path, sepi_params** out);
void sepi_params_free(sepi_params* p);

/* Spectral-entropy hard switch for one dataset sample. */
sepi_status sepi_classify(const sepi_dataset* ds, size_t index, double h_th,
                          sepi_branch* branch, double* entropy);
/* Empirical prediction (Steinmetz or iGSE per the switch), W/m^3. */
sepi_status sepi_predict_empirical(const sepi_params* p, const sepi_dataset* ds,
                                   size_t index, double h_th, double* loss,
                                   sepi_branch* branch, double* entropy);

/* ---- model ------------------------------------------------------------ */

sepi_status sepi_config_create(sepi_config** out); /* defaults */
sepi_status sepi_config_load(const char* path, sepi_config** out);
sepi_status sepi_config_set(sepi_config* cfg, const char* key, const char* value);
/* Fully resolved key-value text (all defaults materialized). The returned
 * pointer stays valid until the next call on the same handle. */
const char* sepi_config_text(sepi_config* cfg);
void sepi_config_free(sepi_config* cfg);

/* Fits the prior and normalization stats on train, initializes parameters,
 * then runs mini-batch training. history_csv may be NULL. */
sepi_status sepi_model_train(const sepi_config* cfg, const sepi_dataset* train,
                             const sepi_dataset* val, const char* history_csv,
                             sepi_model** out);
sepi_status sepi_model_save(const sepi_model* m, const char* path);
sepi_status sepi_model_load(const char* path, sepi_model** out);
/* Forward pass on one dataset sample. */
sepi_status sepi_model_predict(const sepi_model* m, const sepi_dataset* ds, size_t index,
                               double* p_pred, double* p_emp, sepi_branch* branch);
void sepi_model_free(sepi_model* m);

/* ---- evaluation ------------------------------------------------------- */

sepi_status sepi_evaluate(const sepi_model* m, const sepi_dataset* ds, sepi_report** out);
sepi_status sepi_report_metric(const sepi_report* r, const char* name, double* out);
sepi_status sepi_report_write(const sepi_report* r, const char* text_path,
                              const char* csv_path);
void sepi_report_free(sepi_report* r);

/* Trains one model per (lambda1, lambda2) grid cell and writes the table.
 * grid is a string like "1,0;1,0.1;0.7,0.3". NULL or "" uses the default
 * 12-cell grid. */
sepi_status sepi_grid_search(const sepi_config* cfg, const sepi_dataset* train,
                             const sepi_dataset* val, const char* grid,
                             sepi_grid_result** out);
sepi_status sepi_grid_result_best(const sepi_grid_result* g, double* lambda1,
                                  double* lambda2);
sepi_status sepi_grid_result_write(const sepi_grid_result* g, const char* path);
void sepi_grid_result_free(sepi_grid_result* g);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SEPITFP_H */
