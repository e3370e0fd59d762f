#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vigil {

enum class ChannelRole { target, context };

// Regular-grid multivariate series. Missing cells hold NaN as a sentinel,
// but the mask is the single source of truth; downstream math must branch
// on the mask, never on the sentinel. Channel-major storage.
struct SeriesFrame {
    std::vector<int64_t> timestamps;  // epoch seconds, constant spacing
    int64_t sample_period = 0;        // seconds between rows
    std::vector<std::string> channel_names;
    std::vector<ChannelRole> roles;
    std::vector<std::vector<double>> values;    // [channel][row]
    std::vector<std::vector<uint8_t>> missing;  // [channel][row], 1 = missing

    int64_t rows() const { return static_cast<int64_t>(timestamps.size()); }
    int channel_count() const { return static_cast<int>(channel_names.size()); }
    std::vector<int> target_channels() const;
    std::vector<int> context_channels() const;
    int channel_index(const std::string& name) const;  // -1 when absent
};

struct Gap {
    int channel = 0;
    int64_t start = 0;   // first missing row
    int64_t length = 0;  // consecutive missing rows
};

struct WindowSpec {
    int64_t length = 16;  // K
    int64_t stride = 1;
    int64_t past_len = 8;
    int64_t future_len = 8;  // lambda

    void validate() const;  // past_len + future_len == length, stride >= 1, future_len >= 1
};

// Non-owning view over K consecutive rows of a frame.
struct WindowView {
    const SeriesFrame* frame = nullptr;
    int64_t offset = 0;  // first row
    int64_t length = 0;
    int64_t time_begin = 0;  // timestamp of first row
    int64_t time_end = 0;    // timestamp of last row
};

enum class SchemaRole { target, context, ignore };

// `channel.<name> = target|context|ignore`, one line per channel.
std::map<std::string, SchemaRole> load_schema(const std::string& path);

// Header row required; first column is the timestamp (epoch seconds or
// ISO-8601). Empty or non-numeric cells become missing. Rows are snapped
// onto a uniform grid at the modal inter-row spacing; absent grid rows are
// inserted all-missing.
SeriesFrame ingest_csv(const std::string& path, const std::map<std::string, SchemaRole>& schema);

// Maximal runs of missing cells, ordered by (channel, start).
std::vector<Gap> find_gaps(const SeriesFrame& frame);

enum class InterpMethod { nearest_neighbor, nearest_window };

struct InterpResult {
    SeriesFrame frame;
    std::vector<std::string> warnings;
};

// Fills gaps of length <= max_gap and clears their mask; longer gaps stay.
// nearest_neighbor copies the nearest observed value on the same channel
// (earlier wins ties). nearest_window copies the fully-observed donor
// segment of the gap's length whose center is nearest, shifted by the mean
// boundary correction; falls back to nearest_neighbor (with a warning)
// when no donor exists. Donors and neighbors come from the original mask.
InterpResult interpolate(const SeriesFrame& frame, InterpMethod method, int64_t max_gap = 5);

// MAE of predicted vs actual, scaled by the mean one-step naive error of
// training_ref. Returns NaN when the naive error is zero (undefined scale).
double mase(const std::vector<double>& predicted, const std::vector<double>& actual,
            const std::vector<double>& training_ref);
// Multivariate form: mean of per-channel MASE.
double mase(const std::vector<std::vector<double>>& predicted,
            const std::vector<std::vector<double>>& actual,
            const std::vector<std::vector<double>>& training_ref);

// Classic full-window DTW, |a-b| local cost, symmetric steps.
double dtw(const std::vector<double>& a, const std::vector<double>& b);

// Windows at offsets 0, stride, 2*stride, ...; K > rows yields an empty
// sequence and sets *warning when given.
std::vector<WindowView> sliding_windows(const SeriesFrame& frame, const WindowSpec& spec,
                                        std::string* warning = nullptr);

// Copy of rows [start, start+count).
SeriesFrame slice_frame(const SeriesFrame& frame, int64_t start, int64_t count);

// Inverse of ingest_csv given a matching schema: timestamp column in epoch
// seconds, one column per channel, missing cells empty, %.17g values.
void write_series_csv(const std::string& path, const SeriesFrame& frame);

}  // namespace vigil
