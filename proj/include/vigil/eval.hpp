#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vigil/anomaly.hpp"
#include "vigil/model.hpp"
#include "vigil/series.hpp"

namespace vigil {

struct BeatSeries {
    std::vector<double> beat_times;  // seconds, strictly increasing
};

// Local-maxima beat detector over a raw waveform: a sample is a beat when
// it peaks above a rolling median + 4*MAD band and falls outside the
// 250 ms refractory window of the previous beat.
BeatSeries detect_beats(const std::vector<double>& waveform, double rate_hz,
                        std::string* warning = nullptr);

// HR (bpm) and HRV (RMSSD, ms) every step_s seconds over a trailing
// window_s-second window of beats. Inter-beat intervals outside
// (0.25 s, 3 s) are discarded; HR needs >= 2 beats, HRV >= 3, otherwise
// the cell is missing.
SeriesFrame hr_hrv_windows(const BeatSeries& beats, double step_s = 10.0, double window_s = 60.0);

struct FoldMetrics {
    int fold = 0;
    int64_t test_begin = 0, test_end = 0;
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, fpr = 0.0, fnr = 0.0;
};

struct EvalReport {
    std::vector<FoldMetrics> folds;    // folds with at least one positive label
    std::vector<std::string> notices;  // excluded folds and other conditions
    double mean_precision = 0.0, std_precision = 0.0;
    double mean_recall = 0.0, std_recall = 0.0;
    double mean_f1 = 0.0, std_f1 = 0.0;
    double mean_fpr = 0.0, std_fpr = 0.0;
    double mean_fnr = 0.0, std_fnr = 0.0;
};

// Produces binary predictions for rows [test_begin, test_end) of `frame`,
// training on whatever lies outside that block.
using FoldDetector =
    std::function<std::vector<uint8_t>(const SeriesFrame& frame, int64_t test_begin,
                                       int64_t test_end)>;

// Contiguous-block k-fold: fold i tests block i and trains on the rest.
// Point-wise confusion metrics per fold; folds without positive labels are
// excluded from the averages with a notice.
EvalReport kfold_f1(const SeriesFrame& frame, const std::vector<uint8_t>& labels,
                    const FoldDetector& detector, int folds = 5);

std::string eval_report_json(const EvalReport& report);

struct DetectorOptions {
    ModelConfig model;
    WindowSpec window;
    int epochs = 2;
    double lr = 5e-4;
    double lr_decay = 0.9;
    int64_t train_stride = 8;  // training windows subsampled for speed
    double q = 1e-3;
    double u_quantile = 0.98;
    bool threshold_fallback_only = false;
};

// The full pipeline as a fold detector: train on the rows outside the test
// block (both sides, seam-free), calibrate a POT threshold on the training
// scores, then flag test rows whose stride-1 score exceeds it. Rows a
// window future never covers stay unflagged.
FoldDetector model_fold_detector(const DetectorOptions& opts);

// Frame with target channels only; the context-blind ablation input.
SeriesFrame drop_context_channels(const SeriesFrame& frame);

// Forced-fallback threshold: the empirical (1-q) quantile.
PotThreshold quantile_threshold(const std::vector<double>& scores, double q);

// `timestamp,label` CSV with label in {0,1}. Rows align to the frame by
// timestamp; frame rows absent from the file stay 0, timestamps outside
// the frame are an error.
std::vector<uint8_t> load_labels_csv(const std::string& path, const SeriesFrame& frame);
void write_labels_csv(const std::string& path, const SeriesFrame& frame,
                      const std::vector<uint8_t>& labels);

}  // namespace vigil
