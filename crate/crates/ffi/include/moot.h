#ifndef MOOT_H
#define MOOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Ternary answer labels plus the unparseable sentinel.
typedef enum MootLabel {
  MootLabel_Yes = 0,
  MootLabel_No = 1,
  MootLabel_Neither = 2,
  MootLabel_Unparseable = 3,
} MootLabel;

// Result codes for fallible calls.
typedef enum MootStatus {
  MootStatus_Ok = 0,
  MootStatus_NullPointer = 1,
  MootStatus_InvalidUtf8 = 2,
  MootStatus_InvalidArgument = 3,
  MootStatus_LoadFailed = 4,
  MootStatus_RenderFailed = 5,
  MootStatus_ReportFailed = 6,
} MootStatus;

// Opaque loaded dataset: records plus precomputed statistics.
typedef struct MootDataset MootDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the most recent error message for this thread, or NULL. The
// caller owns the string and must free it with `moot_string_free`.
char *moot_last_error(void);

// Frees a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must have been returned by a moot function and not freed before.
void moot_string_free(char *s);

// Loads a dataset and its country-to-group map. On success writes a handle
// to `out`; free it with `moot_dataset_free`.
//
// # Safety
// `dataset_path` and `group_map_path` must be NUL-terminated strings and
// `out` a valid pointer.
enum MootStatus moot_dataset_load(const char *dataset_path,
                                  const char *group_map_path,
                                  struct MootDataset **out);

// # Safety
// `handle` must come from `moot_dataset_load` and not be freed twice.
void moot_dataset_free(struct MootDataset *handle);

// Number of records, or 0 for a NULL handle.
//
// # Safety
// `handle` must be NULL or a live dataset handle.
uint64_t moot_dataset_len(const struct MootDataset *handle);

// Number of distinct countries, or 0 for a NULL handle.
//
// # Safety
// `handle` must be NULL or a live dataset handle.
uint64_t moot_dataset_country_count(const struct MootDataset *handle);

// Count of records carrying the given gold label.
//
// # Safety
// `handle` must be NULL or a live dataset handle.
uint64_t moot_dataset_label_count(const struct MootDataset *handle, enum MootLabel label);

// Accuracy of always answering `label`, written to `out`.
//
// # Safety
// `handle` must be a live dataset handle and `out` a valid pointer.
enum MootStatus moot_dataset_label_only_baseline(const struct MootDataset *handle,
                                                 enum MootLabel label,
                                                 double *out);

// The stats dump (`kind\tkey\tcount` rows) as an owned string.
//
// # Safety
// `handle` must be NULL or a live dataset handle.
char *moot_dataset_stats_tsv(const struct MootDataset *handle);

// Extracts the first standalone yes/no/neither token from model output.
//
// # Safety
// `text` must be a NUL-terminated string.
enum MootLabel moot_parse_label(const char *text);

// Static display name of a label; never freed.
const char *moot_label_name(enum MootLabel label);

// Renders a prompt stage. `bindings_json` is a JSON object mapping
// placeholder names to strings, or NULL for sentinel bindings. On success
// writes an owned string to `out`.
//
// # Safety
// `stage_id` must be NUL-terminated, `bindings_json` NULL or NUL-terminated,
// and `out` a valid pointer.
enum MootStatus moot_render_prompt(const char *stage_id, const char *bindings_json, char **out);

// Replays a run directory's transcript and returns one report table as an
// owned TSV string. `table` is one of: accuracy, parity, dynamics, sankey,
// breakdown_label, breakdown_group, breakdown_country.
//
// # Safety
// `run_dir` and `table` must be NUL-terminated strings and `out` valid.
enum MootStatus moot_report_table(const char *run_dir, const char *table, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOOT_H */
