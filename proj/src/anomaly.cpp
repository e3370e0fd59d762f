#include "vigil/anomaly.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace vigil {

namespace {

constexpr double kNone = std::numeric_limits<double>::quiet_NaN();

struct GpdFit {
    double xi = 0.0;
    double sigma = 1.0;
    double loglik = -std::numeric_limits<double>::infinity();
    bool valid = false;
};

// GPD log-likelihood of exceedances; invalid when the support bound breaks.
GpdFit try_candidate(double xi, double sigma, const std::vector<double>& y) {
    GpdFit fit;
    fit.xi = xi;
    fit.sigma = sigma;
    if (!(sigma > 0.0) || !std::isfinite(xi) || !std::isfinite(sigma)) return fit;
    const double n = static_cast<double>(y.size());
    double ll;
    if (std::abs(xi) < 1e-9) {
        double sum = 0.0;
        for (double v : y) sum += v;
        ll = -n * std::log(sigma) - sum / sigma;
    } else {
        double sum = 0.0;
        for (double v : y) {
            const double a = 1.0 + xi * v / sigma;
            if (a <= 1e-12) return fit;  // outside the fitted support
            sum += std::log(a);
        }
        ll = -n * std::log(sigma) - (1.0 + 1.0 / xi) * sum;
    }
    fit.loglik = ll;
    fit.valid = true;
    return fit;
}

// Grimshaw reduction: roots x of u(x)*v(x) = 1 with
// u(x) = mean(1/(1+x*y)), v(x) = 1 + mean(log(1+x*y)) give the profile
// likelihood's stationary points; xi = v(x) - 1, sigma = xi / x.
double grimshaw_w(double x, const std::vector<double>& y) {
    double us = 0.0, vs = 0.0;
    for (double v : y) {
        const double a = 1.0 + x * v;
        us += 1.0 / a;
        vs += std::log(a);
    }
    const double n = static_cast<double>(y.size());
    return (us / n) * (1.0 + vs / n) - 1.0;
}

void scan_roots(double lo, double hi, const std::vector<double>& y, std::vector<double>* roots) {
    if (!(lo < hi)) return;
    const int grid = 200;
    double prev_x = lo;
    double prev_w = grimshaw_w(lo, y);
    for (int i = 1; i <= grid; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / grid;
        const double w = grimshaw_w(x, y);
        if (std::isfinite(prev_w) && std::isfinite(w) && prev_w * w < 0.0) {
            double a = prev_x, b = x, wa = prev_w;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (a + b);
                const double wm = grimshaw_w(mid, y);
                if (wa * wm <= 0.0) {
                    b = mid;
                } else {
                    a = mid;
                    wa = wm;
                }
            }
            roots->push_back(0.5 * (a + b));
        }
        prev_x = x;
        prev_w = w;
    }
}

GpdFit fit_gpd(const std::vector<double>& y) {
    double mean = 0.0, ymax = 0.0, ymin = std::numeric_limits<double>::infinity();
    for (double v : y) {
        mean += v;
        ymax = std::max(ymax, v);
        ymin = std::min(ymin, v);
    }
    mean /= static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());

    GpdFit best = try_candidate(0.0, mean, y);  // exponential limit
    auto consider = [&](GpdFit c) {
        if (c.valid && c.loglik > best.loglik) best = c;
    };
    if (var > 0.0) {
        const double r = mean * mean / var;
        consider(try_candidate(0.5 * (1.0 - r), 0.5 * mean * (1.0 + r), y));
    }
    std::vector<double> roots;
    const double eps = 1e-8 / std::max(mean, 1e-30);
    scan_roots(-1.0 / ymax + eps, -eps, y, &roots);
    scan_roots(eps, 100.0 / std::max(mean, 1e-30), y, &roots);
    for (double x : roots) {
        double vs = 0.0;
        for (double v : y) vs += std::log(1.0 + x * v);
        const double xi = vs / static_cast<double>(y.size());
        consider(try_candidate(xi, xi / x, y));
    }
    return best;
}

}  // namespace

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("anomaly: percentile of an empty series");
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("anomaly: percentile p " + std::to_string(p) + " outside [0, 1]");
    std::sort(values.begin(), values.end());
    auto idx = static_cast<size_t>(std::llround(p * static_cast<double>(values.size() - 1)));
    idx = std::min(idx, values.size() - 1);
    return values[idx];
}

ScoreSeries score(Model& model, const SeriesFrame& frame) {
    if (!model.trained()) throw std::logic_error("anomaly: model is not trained");
    SeriesFrame z = model.standardize(frame);

    WindowSpec spec = model.window_spec();
    spec.stride = 1;  // every future sample gets full coverage
    const auto windows = sliding_windows(z, spec);
    if (windows.empty())
        throw std::invalid_argument("anomaly: series of " + std::to_string(z.rows()) +
                                    " rows is shorter than one window of " +
                                    std::to_string(spec.length));

    const auto targets = z.target_channels();
    const int n = static_cast<int>(targets.size());
    const int64_t start = spec.past_len;
    const int64_t steps = z.rows() - start;

    std::vector<std::vector<double>> accum(static_cast<size_t>(n),
                                           std::vector<double>(static_cast<size_t>(steps), 0.0));
    std::vector<std::vector<int>> counts(static_cast<size_t>(n),
                                         std::vector<int>(static_cast<size_t>(steps), 0));
    std::vector<int> coverage(static_cast<size_t>(steps), 0);

    for (const WindowView& w : windows) {
        ForwardResult res = model.forward_window(w);
        const auto xhat = res.xhat.value();
        for (int64_t t = 0; t < spec.future_len; ++t) {
            const int64_t row = w.offset + spec.past_len + t;
            const size_t step = static_cast<size_t>(row - start);
            ++coverage[step];
            for (int c = 0; c < n; ++c) {
                const size_t ch = static_cast<size_t>(targets[static_cast<size_t>(c)]);
                if (z.missing[ch][static_cast<size_t>(row)]) continue;
                const double d =
                    xhat[static_cast<size_t>(t * n + c)] - z.values[ch][static_cast<size_t>(row)];
                accum[static_cast<size_t>(c)][step] += d * d;
                ++counts[static_cast<size_t>(c)][step];
            }
        }
    }
    model.tape().reset();

    ScoreSeries out;
    out.start_offset = start;
    out.coverage = std::move(coverage);
    out.scores.assign(static_cast<size_t>(steps), 0.0);
    out.channel_errors.assign(static_cast<size_t>(n),
                              std::vector<double>(static_cast<size_t>(steps), kNone));
    out.timestamps.assign(z.timestamps.begin() + start, z.timestamps.end());
    for (int c : targets) out.channel_names.push_back(z.channel_names[static_cast<size_t>(c)]);

    for (int64_t s = 0; s < steps; ++s) {
        double sum = 0.0;
        int covered = 0;
        for (int c = 0; c < n; ++c) {
            const int k = counts[static_cast<size_t>(c)][static_cast<size_t>(s)];
            if (k == 0) continue;  // channel unobserved at this step
            const double e = accum[static_cast<size_t>(c)][static_cast<size_t>(s)] / k;
            out.channel_errors[static_cast<size_t>(c)][static_cast<size_t>(s)] = e;
            sum += e;
            ++covered;
        }
        out.scores[static_cast<size_t>(s)] = covered > 0 ? sum / covered : 0.0;
    }
    return out;
}

PotThreshold fit_pot(const std::vector<double>& scores, double q, double u_quantile) {
    if (scores.empty()) throw std::invalid_argument("anomaly: fit_pot on an empty series");
    if (u_quantile <= 0.0 || u_quantile >= 1.0)
        throw std::invalid_argument("anomaly: u_quantile must be in (0, 1)");
    if (q <= 0.0 || q >= 1.0 - u_quantile)
        throw std::invalid_argument("anomaly: risk q " + std::to_string(q) +
                                    " must be in (0, 1 - u_quantile)");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("anomaly: non-finite score");

    PotThreshold t;
    t.q = q;
    t.n_total = static_cast<int64_t>(scores.size());
    t.u = percentile(scores, u_quantile);

    std::vector<double> y;
    for (double s : scores)
        if (s > t.u) y.push_back(s - t.u);
    t.n_exceed = static_cast<int64_t>(y.size());

    if (t.n_exceed < 50) {
        t.fallback = true;
        t.tau = percentile(scores, 1.0 - q);
        return t;
    }

    const GpdFit fit = fit_gpd(y);
    t.xi = fit.xi;
    t.sigma = fit.sigma;
    const double r = q * static_cast<double>(t.n_total) / static_cast<double>(t.n_exceed);
    if (std::abs(t.xi) < 1e-6) {
        t.tau = t.u - t.sigma * std::log(r);
    } else {
        t.tau = t.u + (t.sigma / t.xi) * (std::pow(r, -t.xi) - 1.0);
    }
    return t;
}

PotThreshold fit_pot(const ScoreSeries& scores, double q, double u_quantile) {
    return fit_pot(scores.scores, q, u_quantile);
}

std::vector<AnomalyEvent> detect(const ScoreSeries& scores, const PotThreshold& threshold,
                                 int anomaly_type_id) {
    std::vector<AnomalyEvent> events;
    const int64_t steps = scores.steps();
    int64_t s = 0;
    while (s < steps) {
        if (!(scores.scores[static_cast<size_t>(s)] > threshold.tau)) {
            ++s;
            continue;
        }
        int64_t e = s;
        int64_t peak = s;
        while (e + 1 < steps && scores.scores[static_cast<size_t>(e + 1)] > threshold.tau) {
            ++e;
            if (scores.scores[static_cast<size_t>(e)] > scores.scores[static_cast<size_t>(peak)])
                peak = e;
        }

        AnomalyEvent ev;
        ev.start = scores.start_offset + s;
        ev.end = scores.start_offset + e;
        ev.time_begin = scores.timestamps.empty() ? 0 : scores.timestamps[static_cast<size_t>(s)];
        ev.time_end = scores.timestamps.empty() ? 0 : scores.timestamps[static_cast<size_t>(e)];
        ev.peak_score = scores.scores[static_cast<size_t>(peak)];
        ev.peak_index = scores.start_offset + peak;
        ev.anomaly_type_id = anomaly_type_id;

        std::vector<std::pair<double, size_t>> ranked;
        for (size_t c = 0; c < scores.channel_errors.size(); ++c) {
            const double err = scores.channel_errors[c][static_cast<size_t>(peak)];
            if (std::isnan(err)) continue;  // never observed at the peak
            ranked.emplace_back(err, c);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (const auto& [err, c] : ranked) ev.channels_ranked.push_back(scores.channel_names[c]);

        events.push_back(std::move(ev));
        s = e + 1;
    }
    return events;
}

std::vector<uint8_t> percentile_labels(const SeriesFrame& frame, double low, double high) {
    if (!(low >= 0.0 && low < high && high <= 1.0))
        throw std::invalid_argument("anomaly: percentile bounds must satisfy 0 <= low < high <= 1");
    std::vector<uint8_t> labels(static_cast<size_t>(frame.rows()), 0);
    for (int c : frame.target_channels()) {
        std::vector<double> observed;
        for (int64_t t = 0; t < frame.rows(); ++t)
            if (!frame.missing[static_cast<size_t>(c)][static_cast<size_t>(t)])
                observed.push_back(frame.values[static_cast<size_t>(c)][static_cast<size_t>(t)]);
        if (observed.empty()) continue;
        const double lo = percentile(observed, low);
        const double hi = percentile(observed, high);
        for (int64_t t = 0; t < frame.rows(); ++t) {
            if (frame.missing[static_cast<size_t>(c)][static_cast<size_t>(t)]) continue;
            const double v = frame.values[static_cast<size_t>(c)][static_cast<size_t>(t)];
            if (v < lo || v > hi) labels[static_cast<size_t>(t)] = 1;
        }
    }
    return labels;
}

std::string iso8601_utc(int64_t epoch_seconds) {
    std::time_t t = static_cast<std::time_t>(epoch_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int64_t parse_iso8601_utc(const std::string& s) {
    int y, mo, d, h, mi, se;
    char sep;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &se) != 7 ||
        (sep != 'T' && sep != ' '))
        throw std::runtime_error("unparseable ISO-8601 timestamp '" + s + "'");
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    std::time_t t = timegm(&tm);
    if (t == static_cast<std::time_t>(-1))
        throw std::runtime_error("unparseable ISO-8601 timestamp '" + s + "'");
    return static_cast<int64_t>(t);
}

void write_events_jsonl(const std::string& path, const std::vector<AnomalyEvent>& events,
                        const PotThreshold& threshold) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("anomaly: cannot write " + path);
    for (const AnomalyEvent& ev : events) {
        nlohmann::json j;
        j["start"] = iso8601_utc(ev.time_begin);
        j["end"] = iso8601_utc(ev.time_end);
        j["start_index"] = ev.start;
        j["end_index"] = ev.end;
        j["peak_index"] = ev.peak_index;
        j["peak_score"] = ev.peak_score;
        j["threshold"] = threshold.tau;
        j["fallback"] = threshold.fallback;
        j["channels_ranked"] = ev.channels_ranked;
        j["anomaly_type_id"] = ev.anomaly_type_id;
        out << j.dump() << "\n";
    }
}

EventLog read_events_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("anomaly: cannot open " + path);
    EventLog log;
    log.threshold = kNone;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            AnomalyEvent ev;
            ev.time_begin = parse_iso8601_utc(j.at("start").get<std::string>());
            ev.time_end = parse_iso8601_utc(j.at("end").get<std::string>());
            ev.start = j.at("start_index").get<int64_t>();
            ev.end = j.at("end_index").get<int64_t>();
            ev.peak_index = j.at("peak_index").get<int64_t>();
            ev.peak_score = j.at("peak_score").get<double>();
            ev.channels_ranked = j.at("channels_ranked").get<std::vector<std::string>>();
            ev.anomaly_type_id = j.at("anomaly_type_id").get<int>();
            log.threshold = j.at("threshold").get<double>();
            log.fallback = j.at("fallback").get<bool>();
            log.events.push_back(std::move(ev));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return log;
}

void write_scores_csv(const std::string& path, const ScoreSeries& scores) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("anomaly: cannot write " + path);
    out << "timestamp,score,coverage";
    for (const auto& name : scores.channel_names) out << ",err_" << name;
    out << "\n";
    char buf[64];
    for (int64_t s = 0; s < scores.steps(); ++s) {
        out << scores.timestamps[static_cast<size_t>(s)];
        std::snprintf(buf, sizeof(buf), "%.17g", scores.scores[static_cast<size_t>(s)]);
        out << "," << buf << "," << scores.coverage[static_cast<size_t>(s)];
        for (const auto& ch : scores.channel_errors) {
            const double e = ch[static_cast<size_t>(s)];
            out << ",";
            if (!std::isnan(e)) {
                std::snprintf(buf, sizeof(buf), "%.17g", e);
                out << buf;
            }
        }
        out << "\n";
    }
}

}  // namespace vigil
