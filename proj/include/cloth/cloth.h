/* cloth.h - C interface to the cloth library.
 *
 * All functions return a cloth_status; on failure cloth_last_error() holds a
 * human-readable message for the calling thread. Strings returned through
 * char** out-parameters are heap-allocated and must be released with
 * cloth_free_string().
 */
#ifndef CLOTH_H
#define CLOTH_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cloth_status {
    CLOTH_OK = 0,
    CLOTH_ERR_CONFIG = 2,  /* invalid configuration or usage */
    CLOTH_ERR_NUMERIC = 3, /* numeric failure (NaN abort, divergence) */
    CLOTH_ERR_VERIFY = 4,  /* a verification property failed */
    CLOTH_ERR_IO = 5,      /* file format or filesystem problem */
    CLOTH_ERR_INTERNAL = 6
} cloth_status;

/* Opaque handle to a run configuration. */
typedef struct cloth_config cloth_config;

const char* cloth_version(void);

/* Thread-local message describing the most recent failure. */
const char* cloth_last_error(void);

void cloth_free_string(char* s);

/* --- configuration -------------------------------------------------- */

/* New configuration with library defaults; seed and dataset must still be
 * set before use. */
cloth_status cloth_config_create(cloth_config** out);

/* Strict JSON load: unknown keys and type mismatches are errors. */
cloth_status cloth_config_load(const char* path, cloth_config** out);
cloth_status cloth_config_parse(const char* json_text, cloth_config** out);

/* Override one key; dotted paths reach into the dataset object
 * (e.g. "dataset.kind"). The value is parsed as JSON, bare strings pass
 * through. */
cloth_status cloth_config_set(cloth_config* cfg, const char* key, const char* value);

/* Apply CLOTH_-prefixed environment overrides (double underscore nests,
 * e.g. CLOTH_DATASET__KIND). */
cloth_status cloth_config_apply_env(cloth_config* cfg);

/* Canonical JSON dump of the full configuration with defaults resolved. */
cloth_status cloth_config_dump(const cloth_config* cfg, char** json_out);

void cloth_config_destroy(cloth_config* cfg);

/* --- operations ------------------------------------------------------ */

/* Train per the configuration; writes metrics.csv, model.json, config.json
 * and summary.json under out_dir. summary_json_out (optional) receives the
 * summary document. A NaN abort keeps the last checkpoint and returns
 * CLOTH_ERR_NUMERIC. */
cloth_status cloth_train(const cloth_config* cfg, const char* out_dir, char** summary_json_out);

/* Run a property suite: "hmm", "ot", "grad", "entropy" or "all". Returns
 * CLOTH_ERR_VERIFY when any check fails; report_out (optional) receives the
 * log. */
cloth_status cloth_verify(const char* suite, char** report_out);

/* Kernel-form vs flatten-form timing of the class-aware moment loss over a
 * p x q grid; pass NULL/0 for the default grid {8,16} x {2,3}. csv_out
 * receives rows method,p,q,time_per_batch_ms,total_ms. */
cloth_status cloth_bench(int batch_size, int reps, uint64_t seed, const int* ps, int np, const int* qs,
                         int nq, char** csv_out);

/* One training run per q; csv_out receives q,source_acc,target_acc,wall_s.
 * Files land under out_dir. */
cloth_status cloth_sweep_q(const cloth_config* cfg, const int* qs, int nq, const char* out_dir,
                           char** csv_out);

/* Loss-group ablation rows (1..7); csv_out receives
 * row,adv,t,ent,hmm,source_acc,target_acc. */
cloth_status cloth_ablate(const cloth_config* cfg, const int* rows, int n_rows, const char* out_dir,
                          char** csv_out);

/* Compare the amortized transport objective against the exact free-marginal
 * optimum and the Sinkhorn objective at the induced class masses, on a
 * frozen model (loaded from model_path when non-NULL, trained fresh
 * otherwise). report_json_out receives the report. */
cloth_status cloth_compare_ot(const cloth_config* cfg, const char* model_path, char** report_json_out);

/* Render an SVG line chart of the named CSV columns (comma separated). */
cloth_status cloth_export_plot(const char* csv_path, const char* columns, const char* out_svg);

/* Accuracy of a model checkpoint on the dataset named by the config;
 * report_json_out receives {"source_accuracy":..,"target_accuracy":..}. */
cloth_status cloth_evaluate(const cloth_config* cfg, const char* model_path, char** report_json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CLOTH_H */
