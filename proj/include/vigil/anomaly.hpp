#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vigil/model.hpp"
#include "vigil/series.hpp"

namespace vigil {

// Per-timestep anomaly scores over the scoreable suffix of a frame. A
// timestep is scoreable once at least one window's future segment covers
// it; the first past_len rows never are. channel_errors holds the
// coverage-averaged squared error per target channel, NaN where the
// channel was never observed at that step.
struct ScoreSeries {
    int64_t start_offset = 0;  // frame row of scores[0]
    std::vector<double> scores;
    std::vector<int> coverage;
    std::vector<std::vector<double>> channel_errors;  // [target][step]
    std::vector<int64_t> timestamps;                  // epoch seconds per step
    std::vector<std::string> channel_names;           // target names, ranking domain

    int64_t steps() const { return static_cast<int64_t>(scores.size()); }
};

struct PotThreshold {
    double u = 0.0;      // initial empirical quantile
    double xi = 0.0;     // GPD shape
    double sigma = 1.0;  // GPD scale
    double q = 1e-3;     // target exceedance probability
    double tau = 0.0;
    int64_t n_total = 0;
    int64_t n_exceed = 0;
    bool fallback = false;  // empirical quantile used instead of a GPD fit
};

struct AnomalyEvent {
    int64_t start = 0;  // frame rows, inclusive
    int64_t end = 0;
    int64_t time_begin = 0;  // epoch seconds
    int64_t time_end = 0;
    double peak_score = 0.0;
    int64_t peak_index = 0;                   // frame row of the peak
    std::vector<std::string> channels_ranked;  // by error share at the peak, descending
    int anomaly_type_id = 0;
};

// Slides stride-1 windows over the interpolated frame, imputes each future
// segment, and averages squared standardized errors per timestep across the
// windows that cover it. S_t is the mean over target channels with at least
// one observed sample at t; steps observed nowhere score 0.
ScoreSeries score(Model& model, const SeriesFrame& frame);

// Nearest-rank percentile of `values` at p in [0, 1]: sorted[round(p*(N-1))].
double percentile(std::vector<double> values, double p);

// Peaks-over-threshold fit: u at the u_quantile of the scores, GPD on the
// exceedances via method of moments plus Grimshaw likelihood refinement,
// tau at risk q. Fewer than 50 exceedances falls back to the empirical
// (1-q) quantile with fallback=true.
PotThreshold fit_pot(const std::vector<double>& scores, double q = 1e-3, double u_quantile = 0.98);
PotThreshold fit_pot(const ScoreSeries& scores, double q = 1e-3, double u_quantile = 0.98);

// Maximal runs of S_t > tau, one event per run. channels_ranked orders the
// target channels by their error share at the run's peak step.
std::vector<AnomalyEvent> detect(const ScoreSeries& scores, const PotThreshold& threshold,
                                 int anomaly_type_id = 0);

// Per-target-channel percentile bounds over observed values; a row is
// anomalous when ANY target channel lies strictly outside its own bounds.
std::vector<uint8_t> percentile_labels(const SeriesFrame& frame, double low = 0.03,
                                       double high = 0.97);

// One JSON object per event: ISO-8601 UTC times, row range, peak, tau,
// fallback flag, ranked channels, anomaly type.
void write_events_jsonl(const std::string& path, const std::vector<AnomalyEvent>& events,
                        const PotThreshold& threshold);

struct EventLog {
    std::vector<AnomalyEvent> events;
    double threshold = 0.0;  // meaningful only when events exist
    bool fallback = false;
};

// Inverse of write_events_jsonl; the threshold is taken from the event rows.
EventLog read_events_jsonl(const std::string& path);

// timestamp,score,coverage plus one err_<channel> column per target.
void write_scores_csv(const std::string& path, const ScoreSeries& scores);

std::string iso8601_utc(int64_t epoch_seconds);
int64_t parse_iso8601_utc(const std::string& s);  // inverse, throws on malformed input

}  // namespace vigil
