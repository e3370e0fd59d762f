#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "vigil/anomaly.hpp"
#include "vigil/report.hpp"
#include "vigil/series.hpp"

using namespace vigil;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SeriesFrame wide_frame(int64_t rows) {
    SeriesFrame f;
    f.sample_period = 60;
    f.channel_names = {"HR", "HRV", "Steps", "CO2"};
    f.roles = {ChannelRole::target, ChannelRole::target, ChannelRole::context,
               ChannelRole::context};
    f.values.assign(4, {});
    f.missing.assign(4, {});
    for (int64_t t = 0; t < rows; ++t) {
        f.timestamps.push_back(t * 60);
        double td = static_cast<double>(t);
        f.values[0].push_back(70.0 + 5.0 * std::sin(0.05 * td));
        f.values[1].push_back(50.0 + 4.0 * std::cos(0.05 * td));
        f.values[2].push_back(t % 20 < 4 ? 30.0 : 0.0);
        f.values[3].push_back(600.0 + 0.3 * td);
        for (int c = 0; c < 4; ++c) f.missing[static_cast<size_t>(c)].push_back(0);
    }
    return f;
}

AnomalyEvent make_event(const SeriesFrame& f, int64_t start, int64_t end, int64_t peak) {
    AnomalyEvent ev;
    ev.start = start;
    ev.end = end;
    ev.time_begin = f.timestamps[static_cast<size_t>(start)];
    ev.time_end = f.timestamps[static_cast<size_t>(end)];
    ev.peak_index = peak;
    ev.peak_score = 12.41;
    ev.channels_ranked = {"HR", "HRV"};
    ev.anomaly_type_id = 0;
    return ev;
}

const PatientMeta kPatient = {{"id", "p7"}, {"age", "64"}, {"condition", "hypertension"}};

size_t count_marked(const std::string& prompt) {
    size_t n = 0;
    for (size_t at = 0; (at = prompt.find("\n* ", at)) != std::string::npos; ++at) ++n;
    return n;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("prompt names the channels, the time range and the patient") {
    SeriesFrame f = wide_frame(240);
    f.values[0][112] = kNaN;
    f.missing[0][112] = 1;
    AnomalyEvent ev = make_event(f, 110, 125, 117);

    std::string p = event_prompt(ev, 3.871, f, kPatient);
    CHECK(p.find("channels ranked by contribution: HR, HRV") != std::string::npos);
    CHECK(p.find("1970-01-01T01:50:00Z .. 1970-01-01T02:05:00Z (16 samples)") != std::string::npos);
    CHECK(p.find("peak score 12.41 at 1970-01-01T01:57:00Z") != std::string::npos);
    CHECK(p.find("threshold 3.871") != std::string::npos);
    CHECK(p.find("id = p7") != std::string::npos);
    CHECK(p.find("age = 64") != std::string::npos);
    CHECK(p.find("condition = hypertension") != std::string::npos);
    CHECK(p.find("1-minute samples") != std::string::npos);
    CHECK(p.find("  time  HR  HRV  Steps  CO2\n") != std::string::npos);

    CHECK(count_marked(p) == 16);
    // excerpt reaches 60 minutes back from the event start
    CHECK(p.find("\n  00:50  ") != std::string::npos);
    CHECK(p.find("\n  00:49  ") == std::string::npos);
    // the missing cell renders as a dash, not a number
    CHECK(p.find("\n* 01:52  -  ") != std::string::npos);
}

TEST_CASE("prompt for a two hour excerpt stays within the size budget") {
    SeriesFrame f = wide_frame(240);
    AnomalyEvent ev = make_event(f, 110, 125, 117);
    std::string p = event_prompt(ev, 3.871, f, kPatient);
    CHECK(p.size() <= 8000);
    CHECK(p.find("rows omitted") == std::string::npos);
}

TEST_CASE("oversized prompts elide excerpt rows from the middle") {
    SeriesFrame f = wide_frame(240);
    AnomalyEvent ev = make_event(f, 110, 125, 117);
    ReportOptions opts;
    opts.max_prompt_chars = 1500;
    std::string p = event_prompt(ev, 3.871, f, kPatient, opts);
    CHECK(p.size() <= 1500);
    CHECK(p.find("rows omitted") != std::string::npos);
    // both ends of the excerpt survive the elision
    CHECK(p.find("\n  00:50  ") != std::string::npos);
    CHECK(p.find("\n  03:05  ") != std::string::npos);
}

TEST_CASE("excerpt clips at the frame edges") {
    SeriesFrame f = wide_frame(240);
    std::string front = event_prompt(make_event(f, 2, 4, 3), 1.0, f, {});
    CHECK(front.find("\n  00:00  ") != std::string::npos);
    CHECK(front.find("(no details provided)") != std::string::npos);
    std::string back = event_prompt(make_event(f, 237, 239, 238), 1.0, f, {});
    CHECK(back.find("\n* 03:59  ") != std::string::npos);
}

TEST_CASE("report bundle writes prompts, excerpts and a summary") {
    namespace fs = std::filesystem;
    SeriesFrame f = wide_frame(240);
    f.values[0][112] = kNaN;
    f.missing[0][112] = 1;
    std::vector<AnomalyEvent> events = {make_event(f, 110, 125, 117), make_event(f, 200, 204, 202)};

    ReportBundle b = write_report("tmp_report_out", events, 3.871, f, kPatient);
    REQUIRE(b.prompt_paths.size() == 2);
    REQUIRE(b.excerpt_paths.size() == 2);
    CHECK(b.prompt_paths[0] == "tmp_report_out/event_000_prompt.txt");
    CHECK(b.excerpt_paths[1] == "tmp_report_out/event_001_excerpt.csv");

    std::string csv = slurp(b.excerpt_paths[0]);
    CHECK(csv.rfind("timestamp,iso,HR,HRV,Steps,CO2\n", 0) == 0);
    // rows 50..185 plus the header
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 137);
    CHECK(csv.find("3000,1970-01-01T00:50:00Z,") != std::string::npos);
    // the missing HR cell at row 112 becomes an empty field
    CHECK(csv.find("6720,1970-01-01T01:52:00Z,,") != std::string::npos);

    std::string summary = slurp(b.summary_path);
    CHECK(summary.rfind("events = 2\n", 0) == 0);
    CHECK(summary.find("event 000") != std::string::npos);
    CHECK(summary.find("event 001") != std::string::npos);
    CHECK(summary.find("peak 12.41") != std::string::npos);
    CHECK(summary.find("channels HR, HRV") != std::string::npos);

    ReportBundle b2 = write_report("tmp_report_out2", events, 3.871, f, kPatient);
    CHECK(slurp(b2.prompt_paths[0]) == slurp(b.prompt_paths[0]));
    CHECK(slurp(b2.summary_path) == slurp(b.summary_path));

    fs::remove_all("tmp_report_out");
    fs::remove_all("tmp_report_out2");
}

TEST_CASE("zero events still produce the summary line") {
    namespace fs = std::filesystem;
    SeriesFrame f = wide_frame(60);
    ReportBundle b = write_report("tmp_report_empty", {}, 1.0, f, kPatient);
    CHECK(b.prompt_paths.empty());
    CHECK(b.excerpt_paths.empty());
    std::string summary = slurp(b.summary_path);
    CHECK(summary.rfind("events = 0\n", 0) == 0);
    CHECK(summary.find("no anomalies flagged") != std::string::npos);
    fs::remove_all("tmp_report_empty");
}

TEST_CASE("report validates its inputs") {
    SeriesFrame f = wide_frame(60);
    AnomalyEvent ev = make_event(f, 10, 12, 11);

    SeriesFrame bad = f;
    bad.sample_period = 0;
    CHECK_THROWS_WITH_AS(event_prompt(ev, 1.0, bad, {}), doctest::Contains("sample period"),
                         std::invalid_argument);

    AnomalyEvent outside = ev;
    outside.end = 60;
    CHECK_THROWS_WITH_AS(event_prompt(outside, 1.0, f, {}),
                         doctest::Contains("outside the frame"), std::invalid_argument);

    ReportOptions opts;
    opts.excerpt_before_min = -1;
    CHECK_THROWS_WITH_AS(event_prompt(ev, 1.0, f, {}, opts), doctest::Contains("nonnegative"),
                         std::invalid_argument);
}
