/* dreampast public C API.
 *
 * Usage pattern: build a config (defaults, a JSON file, dotted-key
 * overrides), then invoke commands against it. All functions return
 * dp_status; on failure dp_last_error() carries a message for the calling
 * thread. Strings returned through out-parameters are heap-allocated and
 * must be released with dp_string_free().
 */
#ifndef DREAMPAST_H
#define DREAMPAST_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DP_API __declspec(dllexport)
#else
#define DP_API __attribute__((visibility("default")))
#endif

typedef enum dp_status {
    DP_OK = 0,
    DP_ERR_RUNTIME = 1, /* I/O, missing artifacts, internal failures */
    DP_ERR_USAGE = 2,   /* invalid arguments or configuration */
} dp_status;

DP_API const char* dp_version(void);

/* message from the last failing call on this thread ("" if none) */
DP_API const char* dp_last_error(void);

DP_API void dp_string_free(char* s);

/* ---- configuration ----------------------------------------------------- */

typedef struct dp_config dp_config; /* opaque */

DP_API dp_config* dp_config_create(void);              /* built-in defaults */
DP_API dp_config* dp_config_load(const char* path);    /* NULL on failure */
DP_API dp_status dp_config_set(dp_config* cfg, const char* dotted_key, const char* value);
DP_API char* dp_config_dump(const dp_config* cfg); /* effective config as JSON */
DP_API void dp_config_free(dp_config* cfg);

/* ---- commands ----------------------------------------------------------- */

/* style: "pretrain" | "downstream". out_dir NULL -> configured path;
 * seed NULL -> configured seed. force overwrites an existing corpus. */
DP_API dp_status dp_gen_corpus(const dp_config* cfg, const char* style, const char* out_dir,
                               const uint64_t* seed, int force);

/* train (or resume) the denoiser into run_dir; summary_json optional */
DP_API dp_status dp_pretrain(const dp_config* cfg, const char* run_dir, int resume,
                             char** summary_json);

/* the full class-incremental protocol; resumable at step boundaries */
DP_API dp_status dp_run_scenario(const dp_config* cfg, const char* run_dir, int resume,
                                 char** result_json);

/* evaluate one or more segmenter checkpoints on the validation split the
 * config implies; several checkpoints aggregate to mean/std */
DP_API dp_status dp_eval(const dp_config* cfg, const char* const* checkpoints, size_t n,
                         char** result_json);

/* scan a run dir (or a directory of runs) and write CSV tables + plots */
DP_API dp_status dp_report(const char* dir, const char* out_dir, char** summary_json);

/* harmonic mean of base/novel IoU; 0 when both are 0 */
DP_API double dp_hiou(double base, double novel);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DREAMPAST_H */
