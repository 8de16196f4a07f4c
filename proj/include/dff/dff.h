// Copyright 2026 The DFF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the decision-focused fine-tuning library.
 *
 * Every fallible call returns a dff_status. On failure a message describing
 * the error is available from dff_last_error() on the same thread until the
 * next call. Strings returned through char** out-parameters are owned by the
 * caller and must be released with dff_string_free(). Handles are released
 * with their matching *_free function; passing NULL to a free function is a
 * no-op. Distinct handles may be used from different threads concurrently.
 */

#ifndef DFF_DFF_H_
#define DFF_DFF_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DFF_BUILDING_LIBRARY)
#define DFF_API __attribute__((visibility("default")))
#else
#define DFF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dff_status {
  DFF_OK = 0,
  DFF_E_USAGE = 1,    /* invalid arguments or configuration */
  DFF_E_DATA = 2,     /* malformed or inconsistent data */
  DFF_E_SOLVER = 3,   /* an optimization or fixed-point solve failed */
  DFF_E_IO = 4,       /* file system failure */
  DFF_E_INTERNAL = 5  /* anything else */
} dff_status;

typedef struct dff_config dff_config;
typedef struct dff_oracle dff_oracle;
typedef struct dff_dataset dff_dataset;
typedef struct dff_correction dff_correction;

DFF_API const char* dff_version(void);
DFF_API const char* dff_last_error(void);
DFF_API void dff_string_free(char* s);

/* ---- experiment configuration ------------------------------------------ */

DFF_API dff_status dff_config_new(dff_config** out);
/* INI-style file with [experiment], [data], [train] and [backbone] sections. */
DFF_API dff_status dff_config_load(const char* path, dff_config** out);
/* key is "section.name", e.g. "experiment.epsilon". */
DFF_API dff_status dff_config_set(dff_config* cfg, const char* key, const char* value);
DFF_API dff_status dff_config_validate(const dff_config* cfg);
DFF_API dff_status dff_config_dump(const dff_config* cfg, char** out_json);
DFF_API void dff_config_free(dff_config* cfg);

/* ---- commands ----------------------------------------------------------- */

/* Generates one seed of the configured benchmark into out_dir. */
DFF_API dff_status dff_datagen(const dff_config* cfg, uint64_t seed, const char* out_dir,
                               char** out_json);
/* Solves every row of a cost CSV (c_* columns, or all columns when there are
 * none) and returns a JSON array of solutions. */
DFF_API dff_status dff_solve(const char* instance_path, const char* costs_csv, char** out_json);
/* Fits `method` on a data directory written by dff_datagen. */
DFF_API dff_status dff_train(const dff_config* cfg, const char* method, uint64_t seed,
                             const char* data_dir, const char* model_dir, char** out_json);
/* Test-set NDR and MSE of a saved model. */
DFF_API dff_status dff_eval(const char* data_dir, const char* model_dir, char** out_json);
/* Runs every configured (method, seed) cell; writes report files under the
 * configured output directory and returns the rendered table. */
DFF_API dff_status dff_bench(const dff_config* cfg, char** out_table);
/* Epsilon sweep; writes sweep files and returns the summary CSV. */
DFF_API dff_status dff_sweep_eps(const dff_config* cfg, char** out_summary);
/* format is "json", "csv" or "table". report_path is report.json or its
 * directory. */
DFF_API dff_status dff_report_render(const char* report_path, const char* format, char** out_text);

/* ---- decision oracles --------------------------------------------------- */

DFF_API dff_status dff_oracle_from_json(const char* json, dff_oracle** out);
DFF_API dff_status dff_oracle_load(const char* path, dff_oracle** out);
DFF_API size_t dff_oracle_dim(const dff_oracle* oracle);
/* +1 for minimization, -1 for maximization, 0 for a NULL handle. */
DFF_API int dff_oracle_sense(const dff_oracle* oracle);
/* w_out has room for dim entries; either output may be NULL. */
DFF_API dff_status dff_oracle_solve(const dff_oracle* oracle, const double* c, size_t n,
                                    double* w_out, double* objective_out);
DFF_API dff_status dff_oracle_regret(const dff_oracle* oracle, const double* c,
                                     const double* c_hat, size_t n, double* out);
/* SPO+ loss and (optionally) its subgradient in c_tilde. */
DFF_API dff_status dff_oracle_spo_plus(const dff_oracle* oracle, const double* c_tilde,
                                       const double* c, size_t n, double* loss_out,
                                       double* grad_out);
DFF_API void dff_oracle_free(dff_oracle* oracle);

/* ---- datasets ----------------------------------------------------------- */

DFF_API dff_status dff_dataset_read(const char* csv_path, dff_dataset** out);
DFF_API size_t dff_dataset_size(const dff_dataset* ds);
DFF_API size_t dff_dataset_p(const dff_dataset* ds);
DFF_API size_t dff_dataset_d(const dff_dataset* ds);
/* Copies sample i into x (p entries) and c (d entries); either may be NULL. */
DFF_API dff_status dff_dataset_sample(const dff_dataset* ds, size_t i, double* x, double* c);
DFF_API void dff_dataset_free(dff_dataset* ds);

/* ---- correction layer --------------------------------------------------- */

/* Default architecture (three hidden layers of 32), zero bias. */
DFF_API dff_status dff_correction_new(size_t p, size_t d, double epsilon, uint64_t seed,
                                      dff_correction** out);
DFF_API dff_status dff_correction_load(const char* path, dff_correction** out);
DFF_API dff_status dff_correction_save(const dff_correction* net, const char* path);
DFF_API size_t dff_correction_num_params(const dff_correction* net);
DFF_API dff_status dff_correction_get_params(const dff_correction* net, double* out, size_t n);
DFF_API dff_status dff_correction_set_params(dff_correction* net, const double* theta, size_t n);
DFF_API dff_status dff_correction_forward(const dff_correction* net, const double* x, size_t p,
                                          const double* c_hat, size_t d, double* c_tilde_out);
DFF_API void dff_correction_free(dff_correction* net);

#ifdef __cplusplus
}
#endif

#endif /* DFF_DFF_H_ */
