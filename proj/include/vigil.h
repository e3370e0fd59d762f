#ifndef VIGIL_H
#define VIGIL_H

/* C interface to the vigil anomaly-detection pipeline. Handles are opaque;
 * every fallible call returns a vigil_status and leaves a message for
 * vigil_last_error(). Buffers handed out through out-parameters belong to
 * the caller and are released with vigil_free(); strings returned as
 * const char* stay owned by their handle. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vigil_status {
    VIGIL_OK = 0,
    VIGIL_ERR_INVALID = 1, /* bad arguments, configuration or file contents */
    VIGIL_ERR_RUNTIME = 2  /* pipeline failure: IO, numerics, data */
} vigil_status;

/* Message for the most recent failure on this thread; "" after success. */
const char* vigil_last_error(void);

void vigil_free(void* p);

/* ---- series ------------------------------------------------------- */

typedef struct vigil_frame vigil_frame;

/* CSV with a header and a leading timestamp column; the schema file maps
 * `channel.<name> = target|context|ignore`. */
vigil_status vigil_frame_from_csv(const char* csv_path, const char* schema_path,
                                  vigil_frame** out);
void vigil_frame_free(vigil_frame* frame);

int64_t vigil_frame_rows(const vigil_frame* frame);
int vigil_frame_channel_count(const vigil_frame* frame);
const char* vigil_frame_channel_name(const vigil_frame* frame, int channel);
int vigil_frame_channel_is_target(const vigil_frame* frame, int channel);
int64_t vigil_frame_timestamp(const vigil_frame* frame, int64_t row);

vigil_status vigil_frame_to_csv(const vigil_frame* frame, const char* path);

#define VIGIL_INTERP_NEAREST_NEIGHBOR 0
#define VIGIL_INTERP_NEAREST_WINDOW 1

/* Fills gaps of up to max_gap rows; longer gaps stay missing. `warnings`
 * (optional) receives a newline-joined list, empty string when clean. */
vigil_status vigil_interpolate(const vigil_frame* frame, int method, int64_t max_gap,
                               vigil_frame** out, char** warnings);

/* Beat detection on a raw waveform followed by 60 s HR/RMSSD windows every
 * step_s seconds; yields a two-channel target frame. */
vigil_status vigil_hr_hrv_from_waveform(const double* waveform, size_t len, double rate_hz,
                                        double step_s, double window_s, vigil_frame** out,
                                        char** warning);

/* ---- model -------------------------------------------------------- */

typedef struct vigil_model vigil_model;

typedef struct vigil_train_options {
    int blocks;
    int heads;
    int64_t embed_dim;
    int64_t patch;
    int anomaly_types;
    int anomaly_type;
    int64_t ffn_hidden;    /* 0 -> 2 * embed_dim */
    int64_t dylinear_base;
    double dropout;
    uint64_t seed;
    int channel_identity;    /* bool */
    int mask_context_future; /* bool */
    int64_t window_length;
    int64_t window_past;
    int64_t window_future;
    int64_t train_stride;
    int epochs;
    double lr;
    double lr_decay;
} vigil_train_options;

void vigil_train_options_init(vigil_train_options* opts);

vigil_status vigil_train(const vigil_frame* frame, const vigil_train_options* opts,
                         vigil_model** out);
void vigil_model_free(vigil_model* model);

/* Binary checkpoint plus `<path>.manifest` beside it. */
vigil_status vigil_model_save(const vigil_model* model, const char* path);
vigil_status vigil_model_load(const char* path, vigil_model** out);

int vigil_model_epochs(const vigil_model* model);
double vigil_model_epoch_loss(const vigil_model* model, int epoch);

/* Ingests a CSV using the model's own channel schema and reorders the
 * channels into the model's layout; unknown or absent channels fail. */
vigil_status vigil_frame_for_model(const char* csv_path, const vigil_model* model,
                                   vigil_frame** out);

/* ---- scoring, threshold, events ------------------------------------ */

typedef struct vigil_scores vigil_scores;

vigil_status vigil_score(vigil_model* model, const vigil_frame* frame, vigil_scores** out);
void vigil_scores_free(vigil_scores* scores);
int64_t vigil_scores_steps(const vigil_scores* scores);
vigil_status vigil_scores_to_csv(const vigil_scores* scores, const char* path);

typedef struct vigil_threshold {
    double u;
    double xi;
    double sigma;
    double q;
    double tau;
    int64_t n_total;
    int64_t n_exceed;
    int fallback;
} vigil_threshold;

/* Peaks-over-threshold fit at risk q; fallback_only forces the empirical
 * (1-q) quantile instead. */
vigil_status vigil_threshold_fit(const vigil_scores* scores, double q, double u_quantile,
                                 int fallback_only, vigil_threshold* out);

typedef struct vigil_events vigil_events;

vigil_status vigil_detect(const vigil_scores* scores, const vigil_threshold* threshold,
                          int anomaly_type_id, vigil_events** out);
void vigil_events_free(vigil_events* events);
size_t vigil_events_count(const vigil_events* events);
double vigil_events_threshold(const vigil_events* events);

typedef struct vigil_event_info {
    int64_t start_row;
    int64_t end_row; /* inclusive */
    int64_t time_begin;
    int64_t time_end;
    int64_t peak_row;
    double peak_score;
    int anomaly_type_id;
    const char* channels_ranked; /* comma joined, owned by the events handle */
} vigil_event_info;

vigil_status vigil_events_get(const vigil_events* events, size_t index, vigil_event_info* out);

/* Drops events spanning fewer than min_rows rows. */
vigil_status vigil_events_filter(vigil_events* events, int64_t min_rows);

vigil_status vigil_events_write_jsonl(const vigil_events* events, const char* path);
vigil_status vigil_events_read_jsonl(const char* path, vigil_events** out);

/* ---- labels and evaluation ----------------------------------------- */

/* One label per frame row; 1 where any target channel lies strictly
 * outside its own [low, high] percentile bounds. */
vigil_status vigil_percentile_labels(const vigil_frame* frame, double low, double high,
                                     uint8_t** out, size_t* len);

/* `timestamp,label` CSV aligned to the frame by timestamp. */
vigil_status vigil_labels_load_csv(const vigil_frame* frame, const char* path, uint8_t** out,
                                   size_t* len);
vigil_status vigil_labels_write_csv(const vigil_frame* frame, const uint8_t* labels, size_t len,
                                    const char* path);

typedef struct vigil_eval_options {
    vigil_train_options train;
    double q;
    double u_quantile;
    int threshold_fallback_only;
    int folds;
} vigil_eval_options;

void vigil_eval_options_init(vigil_eval_options* opts);

/* Contiguous k-fold cross validation of the full train/threshold/detect
 * pipeline; `report_json` receives the EvalReport. */
vigil_status vigil_eval(const vigil_frame* frame, const uint8_t* labels, size_t len,
                        const vigil_eval_options* opts, char** report_json);

/* ---- synthetic patients -------------------------------------------- */

/* profile_path (optional) holds `key = value` overrides. out_labels/
 * events_json are optional; labels mark injected rows, events_json lists
 * `{"start": row, "end": row, "type": name}` objects. */
vigil_status vigil_synth(const char* profile_path, double days, uint64_t seed,
                         vigil_frame** out_frame, uint8_t** out_labels, size_t* labels_len,
                         char** events_json);

/* ---- report bundles ------------------------------------------------- */

typedef struct vigil_report_options {
    int64_t excerpt_before_min;
    int64_t excerpt_after_min;
    size_t max_prompt_chars;
} vigil_report_options;

void vigil_report_options_init(vigil_report_options* opts);

/* Writes event_<idx>_prompt.txt / event_<idx>_excerpt.csv per event plus
 * summary.txt into out_dir. patient_kv_path (optional) is a `key = value`
 * file. summary_path (optional) receives the summary.txt path. */
vigil_status vigil_report(const char* out_dir, const vigil_events* events,
                          const vigil_frame* frame, const char* patient_kv_path,
                          const vigil_report_options* opts, char** summary_path);

#ifdef __cplusplus
}
#endif

#endif /* VIGIL_H */
