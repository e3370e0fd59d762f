#include "vigil/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace vigil {

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string cadence(int64_t period) {
    if (period % 60 == 0) return std::to_string(period / 60) + "-minute";
    return std::to_string(period) + "-second";
}

// Wall-clock part of the ISO stamp; seconds only when the grid needs them.
std::string clock_of(int64_t epoch, int64_t period) {
    std::string iso = iso8601_utc(epoch);
    return iso.substr(11, period % 60 == 0 ? 5 : 8);
}

struct ExcerptRange {
    int64_t r0 = 0, r1 = 0;
};

ExcerptRange excerpt_range(const AnomalyEvent& event, const SeriesFrame& frame,
                           const ReportOptions& opts) {
    if (frame.sample_period <= 0)
        throw std::invalid_argument("report: frame sample period must be positive");
    if (opts.excerpt_before_min < 0 || opts.excerpt_after_min < 0)
        throw std::invalid_argument("report: excerpt minutes must be nonnegative");
    if (event.start < 0 || event.end >= frame.rows() || event.start > event.end)
        throw std::invalid_argument("report: event rows lie outside the frame");
    int64_t before = opts.excerpt_before_min * 60 / frame.sample_period;
    int64_t after = opts.excerpt_after_min * 60 / frame.sample_period;
    ExcerptRange r;
    r.r0 = std::max<int64_t>(0, event.start - before);
    r.r1 = std::min<int64_t>(frame.rows() - 1, event.end + after);
    return r;
}

std::string join_ranked(const std::vector<std::string>& names) {
    std::string out;
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    return out.empty() ? std::string("(none observed at the peak)") : out;
}

// Head + excerpt rows + tail, keeping `kept` rows split between the start
// and the end of the excerpt when it has to shrink.
std::string assemble(const std::string& head, const std::vector<std::string>& rows,
                     const std::string& tail, size_t kept) {
    std::string out = head;
    if (kept >= rows.size()) {
        for (const std::string& r : rows) out += r;
    } else {
        size_t front = (kept + 1) / 2, back = kept / 2;
        for (size_t i = 0; i < front; ++i) out += rows[i];
        out += "  (" + std::to_string(rows.size() - kept) + " rows omitted)\n";
        for (size_t i = rows.size() - back; i < rows.size(); ++i) out += rows[i];
    }
    out += tail;
    return out;
}

}  // namespace

std::string event_prompt(const AnomalyEvent& event, double threshold, const SeriesFrame& frame,
                         const PatientMeta& patient, const ReportOptions& opts) {
    ExcerptRange range = excerpt_range(event, frame, opts);

    std::string head;
    head +=
        "You are reviewing an alert from a continuous health monitor. Using the\n"
        "signal excerpt and patient details below, explain which pattern was\n"
        "flagged, which channels drove it, and what everyday or clinical causes\n"
        "could plausibly produce it. Note anything that argues against a real\n"
        "health event.\n\n";
    head += "Patient\n";
    if (patient.empty()) head += "  (no details provided)\n";
    for (const auto& [k, v] : patient) head += "  " + k + " = " + v + "\n";
    head += "\nAlert\n";
    head += "  window: " + iso8601_utc(event.time_begin) + " .. " + iso8601_utc(event.time_end) +
            " (" + std::to_string(event.end - event.start + 1) + " samples)\n";
    head += "  peak score " + fmt4(event.peak_score) + " at " + iso8601_utc(frame.timestamps.empty()
                ? event.time_begin
                : frame.timestamps[static_cast<size_t>(event.peak_index)]) +
            ", threshold " + fmt4(threshold) + "\n";
    head += "  channels ranked by contribution: " + join_ranked(event.channels_ranked) + "\n";
    head += "  anomaly type id: " + std::to_string(event.anomaly_type_id) + "\n";
    head += "\nSignals (" + cadence(frame.sample_period) + " samples, alert rows marked *)\n";
    head += "  time";
    for (const std::string& name : frame.channel_names) head += "  " + name;
    head += "\n";

    std::vector<std::string> rows;
    for (int64_t t = range.r0; t <= range.r1; ++t) {
        std::string line = (t >= event.start && t <= event.end) ? "* " : "  ";
        line += clock_of(frame.timestamps[static_cast<size_t>(t)], frame.sample_period);
        for (int c = 0; c < frame.channel_count(); ++c) {
            line += "  ";
            line += frame.missing[static_cast<size_t>(c)][static_cast<size_t>(t)]
                        ? "-"
                        : fmt4(frame.values[static_cast<size_t>(c)][static_cast<size_t>(t)]);
        }
        line += "\n";
        rows.push_back(std::move(line));
    }

    std::string tail =
        "\nRespond with:\n"
        "  1. the dominant deviation in each ranked channel relative to the rest of the excerpt\n"
        "  2. up to three plausible explanations, most likely first\n"
        "  3. whether the context channels support or contradict each explanation\n";

    size_t kept = rows.size();
    std::string text = assemble(head, rows, tail, kept);
    while (text.size() > opts.max_prompt_chars && kept > 2) {
        kept /= 2;
        text = assemble(head, rows, tail, kept);
    }
    if (text.size() > opts.max_prompt_chars) text.resize(opts.max_prompt_chars);
    return text;
}

ReportBundle write_report(const std::string& out_dir, const std::vector<AnomalyEvent>& events,
                          double threshold, const SeriesFrame& frame, const PatientMeta& patient,
                          const ReportOptions& opts) {
    namespace fs = std::filesystem;
    fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw std::runtime_error("report: cannot create output directory " + out_dir);
    }

    auto write_text = [](const fs::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("report: cannot write " + path.string());
        out << text;
        if (!out) throw std::runtime_error("report: cannot write " + path.string());
    };

    ReportBundle bundle;
    std::string summary = "events = " + std::to_string(events.size()) + "\n";
    if (events.empty()) summary += "no anomalies flagged\n";

    char idx[16];
    for (size_t i = 0; i < events.size(); ++i) {
        const AnomalyEvent& ev = events[i];
        std::snprintf(idx, sizeof(idx), "%03zu", i);

        fs::path prompt_path = dir / ("event_" + std::string(idx) + "_prompt.txt");
        write_text(prompt_path, event_prompt(ev, threshold, frame, patient, opts));
        bundle.prompt_paths.push_back(prompt_path.string());

        // The plot-ready slice keeps every excerpt row at full precision.
        ExcerptRange range = excerpt_range(ev, frame, opts);
        std::string csv = "timestamp,iso";
        for (const std::string& name : frame.channel_names) csv += "," + name;
        csv += "\n";
        for (int64_t t = range.r0; t <= range.r1; ++t) {
            int64_t ts = frame.timestamps[static_cast<size_t>(t)];
            csv += std::to_string(ts) + "," + iso8601_utc(ts);
            for (int c = 0; c < frame.channel_count(); ++c) {
                csv += ",";
                if (!frame.missing[static_cast<size_t>(c)][static_cast<size_t>(t)])
                    csv += fmt17(frame.values[static_cast<size_t>(c)][static_cast<size_t>(t)]);
            }
            csv += "\n";
        }
        fs::path csv_path = dir / ("event_" + std::string(idx) + "_excerpt.csv");
        write_text(csv_path, csv);
        bundle.excerpt_paths.push_back(csv_path.string());

        summary += "event " + std::string(idx) + "  " + iso8601_utc(ev.time_begin) + " .. " +
                   iso8601_utc(ev.time_end) + "  peak " + fmt4(ev.peak_score) + "  channels " +
                   join_ranked(ev.channels_ranked) + "\n";
    }

    fs::path summary_path = dir / "summary.txt";
    write_text(summary_path, summary);
    bundle.summary_path = summary_path.string();
    return bundle;
}

}  // namespace vigil
