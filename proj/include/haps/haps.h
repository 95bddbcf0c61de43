#ifndef HAPS_H
#define HAPS_H

/* C interface to the hardening pipeline. All functions are synchronous and
 * thread-compatible (no shared mutable state); strings returned through
 * out-parameters are heap-allocated and must be released with
 * haps_string_free. Paths are UTF-8. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Mirrors the CLI exit codes. */
typedef enum haps_status {
  HAPS_OK = 0,
  HAPS_ERROR = 1,          /* internal failure */
  HAPS_ERROR_CONFIG = 2,   /* invalid config / usage / contract violation */
  HAPS_ERROR_COLLAPSE = 3, /* training loss went non-finite */
  HAPS_ERROR_IO = 4        /* filesystem or file-format failure */
} haps_status;

const char* haps_version(void);

/* Frees any char* produced by this API. NULL is a no-op. */
void haps_string_free(char* s);

/* Pipeline commands. Each takes a JSON config path and writes its artifacts
 * under out_dir (created if missing). seed, when non-NULL, overrides the
 * config's global seed. err_out, when non-NULL, receives an error message
 * on failure (set to NULL on success). */

/* -> search_ledger.csv, model_pre.haps */
haps_status haps_cmd_search(const char* config_path, const char* out_dir,
                            const uint64_t* seed, char** err_out);

/* -> training_log.csv, model_post.haps, stage_<i>.haps/.state.json.
 * model_path may be NULL when resume_checkpoint (a stage_<i>.state.json
 * from an earlier same-config run) is given. */
haps_status haps_cmd_harden(const char* config_path, const char* model_path,
                            const char* out_dir,
                            const char* resume_checkpoint,
                            const uint64_t* seed, char** err_out);

/* Evaluates 1 (phase "pre") or 2 (pre, post) models -> report.csv. */
haps_status haps_cmd_evaluate(const char* config_path,
                              const char* const* model_paths, size_t n_models,
                              const char* out_dir, size_t threads,
                              const uint64_t* seed, char** err_out);

/* -> sweep.csv over the config's sweep ladder. */
haps_status haps_cmd_sweep(const char* config_path, const char* model_path,
                           const char* out_dir, size_t threads,
                           const uint64_t* seed, char** err_out);

/* Merges report CSVs and renders the paired text table. out_dir may be
 * NULL (no files); table_out, when non-NULL, receives the table. */
haps_status haps_cmd_report(const char* const* report_paths, size_t n_reports,
                            const char* out_dir, char** table_out,
                            char** err_out);

/* Finite-difference gradient check of the reference conv->relu->maxpool->
 * dense->dense model (h = 1e-5, tolerance 1e-4, batch of 8). */
haps_status haps_cmd_gradcheck(uint64_t seed, double* max_rel_err_out,
                               int* passed_out, char** err_out);

/* Opaque handle onto a trained model container. */
typedef struct haps_model haps_model;

haps_status haps_model_open(const char* path, haps_model** model_out,
                            char** err_out);
void haps_model_close(haps_model* m);

size_t haps_model_param_count(const haps_model* m);
size_t haps_model_num_classes(const haps_model* m);
/* Doubles per sample (C*H*W) expected by haps_model_predict. */
size_t haps_model_input_size(const haps_model* m);

/* pixels: n_samples * haps_model_input_size(m) doubles in [0,1];
 * labels_out: n_samples entries. */
haps_status haps_model_predict(const haps_model* m, const double* pixels,
                               size_t n_samples, size_t* labels_out,
                               char** err_out);

/* The metadata string embedded in a model container (may be empty). */
haps_status haps_model_meta(const char* path, char** meta_out,
                            char** err_out);

#ifdef __cplusplus
}
#endif

#endif /* HAPS_H */
