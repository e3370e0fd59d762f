#include "vigil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vigil/kv.hpp"
#include "vigil/rng.hpp"

namespace vigil {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int64_t kMinutesPerDay = 1440;

// circadian phase shared by HR (peak early afternoon) and HRV (anti-phase)
double phase(int64_t row) {
    const double m = static_cast<double>(row % kMinutesPerDay);
    return std::sin(2.0 * kPi * (m - 420.0) / static_cast<double>(kMinutesPerDay));
}

struct Mults {
    double hr = 1.0;
    double hrv = 1.0;
    double noise = 1.0;
};

Mults type_mults(const SynthProfile& p, const std::string& type) {
    if (type == "stress") return {p.stress_hr_mult, p.stress_hrv_mult, p.stress_noise_mult};
    if (type == "hypertension") return {1.2, 0.85, 1.0};
    if (type == "hypotension") return {0.8, 1.1, 1.0};
    if (type == "abnormal_hrv") return {1.0, 2.2, 1.0};
    if (type == "sleep_quality") return {1.08, 0.75, 1.0};
    throw std::invalid_argument("synth: unknown injection type '" + type + "'");
}

std::vector<std::string> split_types(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        std::string t = kv_trim(s.substr(pos, comma - pos));
        if (!t.empty()) out.push_back(t);
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("synth: inject_types is empty");
    return out;
}

}  // namespace

double synth_baseline(const SynthProfile& p, const std::string& channel, int64_t row) {
    if (channel == "HR") return p.hr_base + p.hr_circadian * phase(row);
    if (channel == "HRV") return p.hrv_base - p.hrv_circadian * phase(row);
    if (channel == "CO2")
        return p.co2_base +
               p.co2_circadian *
                   std::cos(2.0 * kPi * static_cast<double>(row % kMinutesPerDay) /
                            static_cast<double>(kMinutesPerDay));
    if (channel == "Steps") return 0.0;
    throw std::invalid_argument("synth: unknown channel '" + channel + "'");
}

SynthProfile SynthProfile::from_file(const std::string& path) {
    SynthProfile p;
    for (const auto& [key, val] : parse_kv_file(path)) {
        if (key == "inject_types") {
            p.inject_types = val;
            continue;
        }
        double* field = nullptr;
        if (key == "hr_base") field = &p.hr_base;
        else if (key == "hr_circadian") field = &p.hr_circadian;
        else if (key == "hr_noise") field = &p.hr_noise;
        else if (key == "hrv_base") field = &p.hrv_base;
        else if (key == "hrv_circadian") field = &p.hrv_circadian;
        else if (key == "hrv_noise") field = &p.hrv_noise;
        else if (key == "co2_base") field = &p.co2_base;
        else if (key == "co2_circadian") field = &p.co2_circadian;
        else if (key == "co2_noise") field = &p.co2_noise;
        else if (key == "steps_level") field = &p.steps_level;
        else if (key == "steps_noise") field = &p.steps_noise;
        else if (key == "bouts_per_day") field = &p.bouts_per_day;
        else if (key == "bout_minutes") field = &p.bout_minutes;
        else if (key == "hr_per_step") field = &p.hr_per_step;
        else if (key == "hrv_per_step") field = &p.hrv_per_step;
        else if (key == "stress_hr_mult") field = &p.stress_hr_mult;
        else if (key == "stress_hrv_mult") field = &p.stress_hrv_mult;
        else if (key == "stress_noise_mult") field = &p.stress_noise_mult;
        else if (key == "inject_count") field = &p.inject_count;
        else if (key == "inject_minutes") field = &p.inject_minutes;
        else if (key == "dropout_rate") field = &p.dropout_rate;
        else if (key == "dropout_max") field = &p.dropout_max;
        else throw std::runtime_error(path + ": unknown profile key '" + key + "'");
        try {
            *field = std::stod(val);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": key '" + key + "' has non-numeric value '" + val +
                                     "'");
        }
    }
    return p;
}

SynthResult synth_patient(const SynthProfile& p, double days, uint64_t seed) {
    const int64_t rows = std::llround(days * static_cast<double>(kMinutesPerDay));
    if (rows < 1) throw std::invalid_argument("synth: horizon shorter than one minute");
    Rng rng(seed);

    SynthResult out;
    SeriesFrame& f = out.frame;
    f.sample_period = 60;
    f.channel_names = {"HR", "HRV", "Steps", "CO2"};
    f.roles = {ChannelRole::target, ChannelRole::target, ChannelRole::context,
               ChannelRole::context};
    f.values.assign(4, std::vector<double>(static_cast<size_t>(rows), 0.0));
    f.missing.assign(4, std::vector<uint8_t>(static_cast<size_t>(rows), 0));
    for (int64_t t = 0; t < rows; ++t) f.timestamps.push_back(t * 60);

    // walking bouts, day hours only
    std::vector<uint8_t> in_bout(static_cast<size_t>(rows), 0);
    const int64_t bout_len = std::max<int64_t>(1, std::llround(p.bout_minutes));
    const int64_t bouts = std::llround(p.bouts_per_day);
    const int64_t whole_days = (rows + kMinutesPerDay - 1) / kMinutesPerDay;
    for (int64_t d = 0; d < whole_days; ++d) {
        for (int64_t b = 0; b < bouts; ++b) {
            const int64_t start =
                d * kMinutesPerDay + rng.uniform_int(8 * 60, 20 * 60 - bout_len);
            for (int64_t t = start; t < start + bout_len && t < rows; ++t)
                if (t >= 0) in_bout[static_cast<size_t>(t)] = 1;
        }
    }

    // non-overlapping anomaly injections, types cycled from the profile list
    const auto types = split_types(p.inject_types);
    const int64_t inject_len = std::max<int64_t>(1, std::llround(p.inject_minutes));
    const int64_t inject_count = std::llround(p.inject_count);
    if (inject_count > 0 && rows <= inject_len)
        throw std::invalid_argument("synth: series too short for the injection length");
    for (int64_t i = 0; i < inject_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const int64_t start = rng.uniform_int(0, rows - inject_len);
            const int64_t end = start + inject_len - 1;
            bool overlap = false;
            for (const auto& ev : out.events)
                if (start <= ev.end && end >= ev.start) {
                    overlap = true;
                    break;
                }
            if (overlap) continue;
            out.events.push_back({start, end, types[static_cast<size_t>(i) % types.size()]});
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("synth: could not place " + std::to_string(inject_count) +
                                     " non-overlapping injections");
    }
    std::sort(out.events.begin(), out.events.end(),
              [](const InjectedEvent& a, const InjectedEvent& b) { return a.start < b.start; });

    std::vector<Mults> mults(static_cast<size_t>(rows));
    for (const auto& ev : out.events) {
        const Mults m = type_mults(p, ev.type);
        for (int64_t t = ev.start; t <= ev.end; ++t) mults[static_cast<size_t>(t)] = m;
    }

    // signal assembly; one normal draw per channel per row keeps the stream
    // layout independent of the noise settings
    for (int64_t t = 0; t < rows; ++t) {
        const double n_hr = rng.normal(), n_hrv = rng.normal(), n_steps = rng.normal(),
                     n_co2 = rng.normal();
        double steps = 0.0;
        if (in_bout[static_cast<size_t>(t)])
            steps = std::max(0.0, p.steps_level + p.steps_noise * n_steps);

        double hr = synth_baseline(p, "HR", t) + p.hr_per_step * steps;
        double hrv = synth_baseline(p, "HRV", t) + p.hrv_per_step * steps;
        const Mults& m = mults[static_cast<size_t>(t)];
        hr *= m.hr;
        hrv *= m.hrv;

        f.values[0][static_cast<size_t>(t)] = hr + p.hr_noise * m.noise * n_hr;
        f.values[1][static_cast<size_t>(t)] = std::max(0.0, hrv + p.hrv_noise * m.noise * n_hrv);
        f.values[2][static_cast<size_t>(t)] = steps;
        f.values[3][static_cast<size_t>(t)] = synth_baseline(p, "CO2", t) + p.co2_noise * n_co2;
    }

    // channel dropouts exercise the interpolation path downstream
    if (p.dropout_rate > 0.0) {
        const int64_t max_gap = std::max<int64_t>(1, std::llround(p.dropout_max));
        for (size_t c = 0; c < 4; ++c) {
            for (int64_t t = 0; t < rows; ++t) {
                if (rng.uniform() >= p.dropout_rate) continue;
                const int64_t len = rng.uniform_int(1, max_gap);
                for (int64_t g = t; g < std::min(rows, t + len); ++g) {
                    f.values[c][static_cast<size_t>(g)] =
                        std::numeric_limits<double>::quiet_NaN();
                    f.missing[c][static_cast<size_t>(g)] = 1;
                }
                t += len;
            }
        }
    }
    return out;
}

}  // namespace vigil
