#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vigil/series.hpp"

namespace vigil {

// Synthetic patient generator profile. Signals are 1-minute resolution:
// circadian sinusoids plus activity coupling plus Gaussian noise, with
// anomaly injections layered on the deterministic part and random channel
// dropouts layered on top of everything.
struct SynthProfile {
    double hr_base = 70.0, hr_circadian = 8.0, hr_noise = 1.5;
    double hrv_base = 55.0, hrv_circadian = 12.0, hrv_noise = 3.0;
    double co2_base = 600.0, co2_circadian = 150.0, co2_noise = 25.0;
    double steps_level = 60.0;  // steps/min during a walking bout
    double steps_noise = 5.0;
    double bouts_per_day = 6.0;
    double bout_minutes = 30.0;
    double hr_per_step = 0.25;    // bpm per step/min
    double hrv_per_step = -0.15;  // ms per step/min
    double stress_hr_mult = 1.3;
    double stress_hrv_mult = 0.5;
    double stress_noise_mult = 6.0;  // HR/HRV noise scale during stress; beats turn erratic
    double inject_count = 0.0;
    double inject_minutes = 45.0;
    std::string inject_types = "stress";  // comma list over the known types
    double dropout_rate = 0.0;            // per-channel gap-start probability per row
    double dropout_max = 4.0;             // gap length uniform in [1, dropout_max]

    // key=value overrides on the defaults; unknown keys are rejected.
    static SynthProfile from_file(const std::string& path);
};

struct InjectedEvent {
    int64_t start = 0;  // rows, inclusive
    int64_t end = 0;
    std::string type;
};

struct SynthResult {
    SeriesFrame frame;  // HR, HRV targets; Steps, CO2 context
    std::vector<InjectedEvent> events;
};

// Deterministic for a given (profile, days, seed).
SynthResult synth_patient(const SynthProfile& profile, double days, uint64_t seed);

// The noiseless, activity-free circadian value of a channel at row t;
// the zero-noise generator output equals this exactly.
double synth_baseline(const SynthProfile& profile, const std::string& channel, int64_t row);

}  // namespace vigil
