#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "vigil/synth.hpp"

using namespace vigil;

namespace {

SynthProfile quiet_profile() {
    SynthProfile p;
    p.hr_noise = p.hrv_noise = p.co2_noise = p.steps_noise = 0.0;
    p.bouts_per_day = 0.0;
    p.steps_level = 0.0;
    p.inject_count = 0.0;
    p.dropout_rate = 0.0;
    return p;
}

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = "tmp_" + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("quiet profile reproduces the circadian baseline exactly") {
    SynthResult r = synth_patient(quiet_profile(), 2.0, 1);
    REQUIRE(r.frame.rows() == 2880);
    REQUIRE(r.events.empty());
    CHECK(r.frame.channel_names ==
          std::vector<std::string>{"HR", "HRV", "Steps", "CO2"});
    CHECK(r.frame.target_channels() == std::vector<int>{0, 1});
    CHECK(r.frame.context_channels() == std::vector<int>{2, 3});
    CHECK(r.frame.sample_period == 60);

    SynthProfile p = quiet_profile();
    for (int64_t t = 0; t < r.frame.rows(); ++t) {
        CHECK(r.frame.values[0][static_cast<size_t>(t)] == synth_baseline(p, "HR", t));
        CHECK(r.frame.values[1][static_cast<size_t>(t)] == synth_baseline(p, "HRV", t));
        CHECK(r.frame.values[2][static_cast<size_t>(t)] == 0.0);
        CHECK(r.frame.values[3][static_cast<size_t>(t)] == synth_baseline(p, "CO2", t));
    }
}

TEST_CASE("circadian baseline peaks in the afternoon and troughs at night") {
    SynthProfile p;
    double peak = -1e9, trough = 1e9;
    int64_t peak_at = 0, trough_at = 0;
    for (int64_t m = 0; m < 1440; ++m) {
        const double hr = synth_baseline(p, "HR", m);
        if (hr > peak) {
            peak = hr;
            peak_at = m;
        }
        if (hr < trough) {
            trough = hr;
            trough_at = m;
        }
    }
    CHECK(peak == doctest::Approx(p.hr_base + p.hr_circadian));
    CHECK(peak_at / 60 == 13);
    CHECK(trough_at / 60 == 1);
    // HRV runs anti-phase to HR
    CHECK(synth_baseline(p, "HRV", peak_at) == doctest::Approx(p.hrv_base - p.hrv_circadian));
}

TEST_CASE("stress injections scale hr and hrv for their duration") {
    SynthProfile p = quiet_profile();
    p.inject_count = 1;
    p.inject_minutes = 30;
    SynthResult r = synth_patient(p, 2.0, 7);
    REQUIRE(r.events.size() == 1);
    const auto& ev = r.events[0];
    CHECK(ev.type == "stress");
    CHECK(ev.end - ev.start + 1 == 30);

    for (int64_t t = 0; t < r.frame.rows(); ++t) {
        const double base_hr = synth_baseline(p, "HR", t);
        const double base_hrv = synth_baseline(p, "HRV", t);
        if (t >= ev.start && t <= ev.end) {
            CHECK(r.frame.values[0][static_cast<size_t>(t)] == doctest::Approx(base_hr * 1.3));
            CHECK(r.frame.values[1][static_cast<size_t>(t)] == doctest::Approx(base_hrv * 0.5));
        } else {
            CHECK(r.frame.values[0][static_cast<size_t>(t)] == base_hr);
            CHECK(r.frame.values[1][static_cast<size_t>(t)] == base_hrv);
        }
    }
}

TEST_CASE("same seed gives identical output") {
    SynthProfile p;
    p.inject_count = 4;
    p.dropout_rate = 0.002;
    SynthResult a = synth_patient(p, 3.0, 42);
    SynthResult b = synth_patient(p, 3.0, 42);

    REQUIRE(a.events.size() == b.events.size());
    for (size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].start == b.events[i].start);
        CHECK(a.events[i].end == b.events[i].end);
        CHECK(a.events[i].type == b.events[i].type);
    }
    for (size_t c = 0; c < 4; ++c) {
        CHECK(a.frame.missing[c] == b.frame.missing[c]);
        for (size_t t = 0; t < a.frame.values[c].size(); ++t) {
            if (a.frame.missing[c][t]) continue;
            CHECK(a.frame.values[c][t] == b.frame.values[c][t]);
        }
    }

    SynthResult d = synth_patient(p, 3.0, 43);
    bool any_diff = false;
    for (size_t t = 0; t < a.frame.values[0].size() && !any_diff; ++t)
        if (!a.frame.missing[0][t] && !d.frame.missing[0][t] &&
            a.frame.values[0][t] != d.frame.values[0][t])
            any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("injections are sorted, disjoint, and cycle the type list") {
    SynthProfile p;
    p.inject_count = 6;
    p.inject_types = "stress, hypotension";
    SynthResult r = synth_patient(p, 14.0, 5);
    REQUIRE(r.events.size() == 6);
    for (size_t i = 1; i < r.events.size(); ++i)
        CHECK(r.events[i].start > r.events[i - 1].end);
    int stress = 0, hypo = 0;
    for (const auto& ev : r.events) {
        if (ev.type == "stress") ++stress;
        if (ev.type == "hypotension") ++hypo;
        CHECK(ev.end < r.frame.rows());
    }
    CHECK(stress == 3);
    CHECK(hypo == 3);
}

TEST_CASE("dropouts stay within the configured gap length") {
    SynthProfile p;
    p.dropout_rate = 0.01;
    p.dropout_max = 4;
    SynthResult r = synth_patient(p, 3.0, 11);

    int64_t total_missing = 0;
    for (size_t c = 0; c < 4; ++c) {
        int64_t run = 0;
        for (int64_t t = 0; t < r.frame.rows(); ++t) {
            if (r.frame.missing[c][static_cast<size_t>(t)]) {
                ++run;
                ++total_missing;
                CHECK(std::isnan(r.frame.values[c][static_cast<size_t>(t)]));
            } else {
                run = 0;
            }
            CHECK(run <= 4);
        }
    }
    // rate 0.01 with mean gap 2.5 puts the expected share near 2.5%
    const double share =
        static_cast<double>(total_missing) / static_cast<double>(4 * r.frame.rows());
    CHECK(share > 0.005);
    CHECK(share < 0.06);
}

TEST_CASE("activity bouts couple into hr and hrv") {
    SynthProfile p = quiet_profile();
    p.bouts_per_day = 4;
    p.bout_minutes = 30;
    p.steps_level = 60;
    SynthResult r = synth_patient(p, 2.0, 9);

    int64_t active = 0;
    for (int64_t t = 0; t < r.frame.rows(); ++t) {
        const double steps = r.frame.values[2][static_cast<size_t>(t)];
        if (steps > 0.0) {
            ++active;
            CHECK(r.frame.values[0][static_cast<size_t>(t)] ==
                  doctest::Approx(synth_baseline(p, "HR", t) + 0.25 * steps));
            CHECK(r.frame.values[1][static_cast<size_t>(t)] ==
                  doctest::Approx(synth_baseline(p, "HRV", t) - 0.15 * steps));
        } else {
            CHECK(r.frame.values[0][static_cast<size_t>(t)] == synth_baseline(p, "HR", t));
        }
    }
    // 4 bouts x 30 min x 2 days, minus possible overlaps
    CHECK(active > 120);
    CHECK(active <= 240);
}

TEST_CASE("profile files override defaults and reject junk") {
    SUBCASE("overrides apply") {
        auto path = write_temp("profile_ok.cfg",
                               "# test profile\n"
                               "hr_base = 80\n"
                               "inject_count = 3\n"
                               "inject_types = stress, abnormal_hrv\n");
        SynthProfile p = SynthProfile::from_file(path);
        CHECK(p.hr_base == 80.0);
        CHECK(p.inject_count == 3.0);
        CHECK(p.inject_types == "stress, abnormal_hrv");
        CHECK(p.hrv_base == 55.0);  // untouched default
        std::remove(path.c_str());
    }

    SUBCASE("unknown key is named in the error") {
        auto path = write_temp("profile_bad.cfg", "hr_bias = 80\n");
        CHECK_THROWS_WITH_AS(SynthProfile::from_file(path), doctest::Contains("hr_bias"),
                             std::runtime_error);
        std::remove(path.c_str());
    }

    SUBCASE("non-numeric value is rejected") {
        auto path = write_temp("profile_nan.cfg", "hr_base = fast\n");
        CHECK_THROWS_WITH_AS(SynthProfile::from_file(path), doctest::Contains("non-numeric"),
                             std::runtime_error);
        std::remove(path.c_str());
    }
}

TEST_CASE("unknown injection type is rejected") {
    SynthProfile p;
    p.inject_count = 1;
    p.inject_types = "mystery";
    CHECK_THROWS_WITH_AS(synth_patient(p, 1.0, 1), doctest::Contains("mystery"),
                         std::invalid_argument);
}

TEST_CASE("timestamps advance by one minute from zero") {
    SynthResult r = synth_patient(quiet_profile(), 0.5, 2);
    REQUIRE(r.frame.rows() == 720);
    for (int64_t t = 0; t < r.frame.rows(); ++t)
        CHECK(r.frame.timestamps[static_cast<size_t>(t)] == t * 60);
}
