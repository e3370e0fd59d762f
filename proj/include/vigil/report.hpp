#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vigil/anomaly.hpp"
#include "vigil/series.hpp"

namespace vigil {

// Patient facts as key/value pairs in file order; the order fixes the
// prompt bytes.
using PatientMeta = std::vector<std::pair<std::string, std::string>>;

struct ReportOptions {
    int64_t excerpt_before_min = 60;  // excerpt reach either side of the event
    int64_t excerpt_after_min = 60;
    size_t max_prompt_chars = 8000;  // hard cap; excerpt rows are elided to fit
};

// Plain-text explanation prompt for one event: ranked channels, peak score
// against the threshold, patient metadata and a signal excerpt around the
// event. Text construction only, no network.
std::string event_prompt(const AnomalyEvent& event, double threshold, const SeriesFrame& frame,
                         const PatientMeta& patient, const ReportOptions& opts = {});

struct ReportBundle {
    std::vector<std::string> prompt_paths;
    std::vector<std::string> excerpt_paths;
    std::string summary_path;
};

// Writes event_<idx>_prompt.txt plus a plot-ready event_<idx>_excerpt.csv
// per event, and summary.txt always (the only artifact when no events).
ReportBundle write_report(const std::string& out_dir, const std::vector<AnomalyEvent>& events,
                          double threshold, const SeriesFrame& frame, const PatientMeta& patient,
                          const ReportOptions& opts = {});

}  // namespace vigil
