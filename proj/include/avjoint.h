/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the avjoint audio-visual scene classification library.
 * All objects are opaque handles; every fallible call returns an avj_status
 * and leaves a thread-local message retrievable with avj_last_error().
 * Strings returned through `char**` are heap-allocated and released with
 * avj_string_free().
 */
#ifndef AVJOINT_H
#define AVJOINT_H

#include <stddef.h>
#include <stdint.h>

#if defined(AVJ_BUILDING_LIBRARY)
#define AVJ_API __attribute__((visibility("default")))
#else
#define AVJ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum avj_status {
  AVJ_OK = 0,
  AVJ_ERR_INVALID_INPUT = 1,
  AVJ_ERR_INVALID_CONFIG = 2,
  AVJ_ERR_INVALID_STATE = 3,
  AVJ_ERR_NUMERICAL = 4,
  AVJ_ERR_FORMAT = 5,
  AVJ_ERR_IO = 6,
  AVJ_ERR_TRAINING = 7,
  AVJ_ERR_CHECK_FAILED = 8,
  AVJ_ERR_INTERNAL = 9
} avj_status;

typedef struct avj_config avj_config;
typedef struct avj_model avj_model;
typedef struct avj_report avj_report;

/* Receives one line per finished training epoch (JSON) or progress note. */
typedef void (*avj_log_fn)(const char* line, void* user);

AVJ_API const char* avj_version(void);
AVJ_API const char* avj_last_error(void);
AVJ_API const char* avj_status_name(avj_status s);
/* Process exit code for a status: 0 ok, 1 check/state, 2 usage/config/input, 3 I/O/format, 4 numerical/training. */
AVJ_API int avj_exit_code(avj_status s);
AVJ_API void avj_string_free(char* s);
AVJ_API void avj_set_log_callback(avj_log_fn fn, void* user);

/* --- configuration --- */
AVJ_API avj_status avj_config_new(avj_config** out);
AVJ_API void avj_config_free(avj_config* cfg);
AVJ_API avj_status avj_config_load(avj_config* cfg, const char* path);
AVJ_API avj_status avj_config_set(avj_config* cfg, const char* key, const char* value);
/* Non-zero when `key` was assigned by a file or avj_config_set. */
AVJ_API int avj_config_is_set(const avj_config* cfg, const char* key);
AVJ_API avj_status avj_config_get(const avj_config* cfg, const char* key, char** out);
AVJ_API avj_status avj_config_dump(const avj_config* cfg, char** out);

/* --- data --- */
/* Extracts AVF1 features for one WAV file; *n_frames may be NULL. */
AVJ_API avj_status avj_extract_file(const avj_config* cfg, const char* wav_path, const char* avf1_path,
                                    size_t* n_frames);
/* Extracts <out_dir>/<clip_id>.avf1 for every manifest entry. */
AVJ_API avj_status avj_extract_manifest(const avj_config* cfg, const char* manifest_path, const char* out_dir,
                                        size_t* n_clips);
AVJ_API avj_status avj_synth(const avj_config* cfg, uint64_t seed, const char* out_dir);
AVJ_API avj_status avj_split(const char* manifest_in, double val_fraction, uint64_t seed, const char* manifest_out);

/* --- training --- */
/* Trains per train.strategy; writes model.avw1, train_log.jsonl,
 * resolved_config.txt and (when the manifest has test clips)
 * eval_report.txt into out_dir. `out` may be NULL. */
AVJ_API avj_status avj_train(const avj_config* cfg, const char* manifest_path, const char* out_dir, avj_model** out);
/* Runs the 2x2 ablation grid; writes cell_<I..IV>.avw1, cell_<I..IV>_report.txt,
 * ablation.tsv, train_log.jsonl and resolved_config.txt into out_dir. */
AVJ_API avj_status avj_ablate(const avj_config* cfg, const char* manifest_path, const char* out_dir);

/* --- models --- */
AVJ_API avj_status avj_model_load(const avj_config* cfg, const char* ckpt_path, avj_model** out);
AVJ_API avj_status avj_model_save(const avj_model* model, const char* ckpt_path);
AVJ_API void avj_model_free(avj_model* model);

/* split: "test", "val", "train" or "all". */
AVJ_API avj_status avj_evaluate(avj_model* model, const char* manifest_path, const char* split, avj_report** out);
AVJ_API avj_status avj_export_embeddings(avj_model* model, const char* manifest_path, const char* split,
                                         const char* out_path);

AVJ_API double avj_report_avg_logloss(const avj_report* r);
AVJ_API double avj_report_avg_accuracy(const avj_report* r);
AVJ_API size_t avj_report_segments(const avj_report* r);
AVJ_API avj_status avj_report_write(const avj_report* r, const char* path);
AVJ_API avj_status avj_report_text(const avj_report* r, char** out);
AVJ_API void avj_report_free(avj_report* r);

/* --- checks --- */
/* Finite-difference gradient check over every layer kind and the composed
 * network. `sabotage` is NULL, "" or "conv" (test fixture). Returns
 * AVJ_ERR_CHECK_FAILED when any relative error reaches 1e-5; the per-layer
 * table is stored in *report either way. */
AVJ_API avj_status avj_grad_check(double eps, uint64_t seed, const char* sabotage, char** report);

#ifdef __cplusplus
}
#endif

#endif /* AVJOINT_H */
