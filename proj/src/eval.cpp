#include "vigil/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace vigil {

namespace {

constexpr double kRefractorySec = 0.25;
constexpr double kIbiMinSec = 0.25;
constexpr double kIbiMaxSec = 3.0;
constexpr double kMadGain = 4.0;
constexpr double kStatWindowSec = 2.0;

double median_inplace(std::vector<double>& v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(mid), v.end());
    return v[mid];
}

}  // namespace

BeatSeries detect_beats(const std::vector<double>& waveform, double rate_hz, std::string* warning) {
    if (rate_hz < 32.0)
        throw std::invalid_argument("eval: sample rate " + std::to_string(rate_hz) +
                                    " Hz is below the 32 Hz minimum");
    BeatSeries beats;
    if (waveform.size() < 3) {
        if (warning) *warning = "waveform too short for beat detection";
        return beats;
    }
    const auto [mn, mx] = std::minmax_element(waveform.begin(), waveform.end());
    if (*mn == *mx) {
        if (warning) *warning = "flat signal, no beats detected";
        return beats;
    }

    const int64_t n = static_cast<int64_t>(waveform.size());
    const int64_t half = std::max<int64_t>(1, std::llround(rate_hz * kStatWindowSec / 2.0));
    std::vector<double> win, dev;
    double last_beat = -1e18;
    for (int64_t i = 1; i + 1 < n; ++i) {
        const double x = waveform[static_cast<size_t>(i)];
        if (!(x > waveform[static_cast<size_t>(i - 1)] && x >= waveform[static_cast<size_t>(i + 1)]))
            continue;

        const int64_t lo = std::max<int64_t>(0, i - half);
        const int64_t hi = std::min(n, i + half + 1);
        win.assign(waveform.begin() + lo, waveform.begin() + hi);
        const double med = median_inplace(win);
        dev.resize(win.size());
        for (size_t j = 0; j < win.size(); ++j) dev[j] = std::abs(win[j] - med);
        const double mad = median_inplace(dev);
        if (!(x > med + kMadGain * mad)) continue;

        const double t = static_cast<double>(i) / rate_hz;
        if (t - last_beat < kRefractorySec) continue;  // merged peak, keep the first
        beats.beat_times.push_back(t);
        last_beat = t;
    }
    if (beats.beat_times.empty() && warning) *warning = "no beats above the adaptive threshold";
    return beats;
}

SeriesFrame hr_hrv_windows(const BeatSeries& beats, double step_s, double window_s) {
    if (!(step_s > 0.0) || std::llround(step_s) != step_s)
        throw std::invalid_argument("eval: step must be a positive whole number of seconds");
    if (window_s < step_s) throw std::invalid_argument("eval: window must be >= step");

    SeriesFrame f;
    f.sample_period = std::llround(step_s);
    f.channel_names = {"HR", "HRV"};
    f.roles = {ChannelRole::target, ChannelRole::target};
    f.values.assign(2, {});
    f.missing.assign(2, {});
    if (beats.beat_times.size() < 2) return f;

    const double t_min = beats.beat_times.front();
    const double t_max = beats.beat_times.back();
    const int64_t step = std::llround(step_s);
    int64_t start = static_cast<int64_t>(std::floor(t_min / step_s)) * step;

    for (; static_cast<double>(start) <= t_max; start += step) {
        const double w_end = static_cast<double>(start) + window_s;
        auto first = std::lower_bound(beats.beat_times.begin(), beats.beat_times.end(),
                                      static_cast<double>(start));
        auto last = std::lower_bound(first, beats.beat_times.end(), w_end);

        // intervals between adjacent in-window beats, cleaned to the valid band
        std::vector<double> ibis;      // kept values
        std::vector<size_t> ibi_idx;   // original positions, for adjacency
        size_t pos = 0;
        for (auto it = first; it != last && it + 1 != last; ++it, ++pos) {
            const double ibi = *(it + 1) - *it;
            if (ibi > kIbiMinSec && ibi < kIbiMaxSec) {
                ibis.push_back(ibi);
                ibi_idx.push_back(pos);
            }
        }

        f.timestamps.push_back(start);
        if (ibis.empty()) {
            f.values[0].push_back(0.0);
            f.missing[0].push_back(1);
        } else {
            double mean = 0.0;
            for (double v : ibis) mean += v;
            mean /= static_cast<double>(ibis.size());
            f.values[0].push_back(60.0 / mean);
            f.missing[0].push_back(0);
        }

        // RMSSD over differences of originally adjacent intervals, in ms
        double sq = 0.0;
        int64_t diffs = 0;
        for (size_t j = 0; j + 1 < ibis.size(); ++j) {
            if (ibi_idx[j + 1] != ibi_idx[j] + 1) continue;
            const double d = (ibis[j + 1] - ibis[j]) * 1000.0;
            sq += d * d;
            ++diffs;
        }
        if (diffs == 0) {
            f.values[1].push_back(0.0);
            f.missing[1].push_back(1);
        } else {
            f.values[1].push_back(std::sqrt(sq / static_cast<double>(diffs)));
            f.missing[1].push_back(0);
        }
    }
    return f;
}

namespace {

void mean_std(const std::vector<double>& v, double* mean, double* sd) {
    *mean = 0.0;
    *sd = 0.0;
    if (v.empty()) return;
    for (double x : v) *mean += x;
    *mean /= static_cast<double>(v.size());
    for (double x : v) *sd += (x - *mean) * (x - *mean);
    *sd = std::sqrt(*sd / static_cast<double>(v.size()));
}

}  // namespace

EvalReport kfold_f1(const SeriesFrame& frame, const std::vector<uint8_t>& labels,
                    const FoldDetector& detector, int folds) {
    if (static_cast<int64_t>(labels.size()) != frame.rows())
        throw std::invalid_argument("eval: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(frame.rows()) + " rows");
    if (folds < 2 || static_cast<int64_t>(folds) > frame.rows())
        throw std::invalid_argument("eval: fold count must be in [2, rows]");

    EvalReport report;
    std::vector<double> ps, rs, f1s, fprs, fnrs;
    const int64_t T = frame.rows();
    for (int i = 0; i < folds; ++i) {
        const int64_t begin = T * i / folds;
        const int64_t end = T * (i + 1) / folds;
        auto preds = detector(frame, begin, end);
        if (static_cast<int64_t>(preds.size()) != end - begin)
            throw std::runtime_error("eval: detector returned " + std::to_string(preds.size()) +
                                     " predictions for a block of " + std::to_string(end - begin));

        FoldMetrics m;
        m.fold = i;
        m.test_begin = begin;
        m.test_end = end;
        for (int64_t t = begin; t < end; ++t) {
            const bool truth = labels[static_cast<size_t>(t)] != 0;
            const bool pred = preds[static_cast<size_t>(t - begin)] != 0;
            if (truth && pred) ++m.tp;
            if (!truth && pred) ++m.fp;
            if (truth && !pred) ++m.fn;
            if (!truth && !pred) ++m.tn;
        }
        if (m.tp + m.fn == 0) {
            report.notices.push_back("fold " + std::to_string(i) +
                                     ": no positive labels, F1 undefined, fold excluded");
            continue;
        }
        m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp)
                                      : 0.0;
        m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
        m.f1 = m.precision + m.recall > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        m.fpr = m.fp + m.tn > 0 ? static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn) : 0.0;
        m.fnr = static_cast<double>(m.fn) / static_cast<double>(m.fn + m.tp);
        ps.push_back(m.precision);
        rs.push_back(m.recall);
        f1s.push_back(m.f1);
        fprs.push_back(m.fpr);
        fnrs.push_back(m.fnr);
        report.folds.push_back(m);
    }
    if (report.folds.empty()) report.notices.push_back("no fold had positive labels; no averages");
    mean_std(ps, &report.mean_precision, &report.std_precision);
    mean_std(rs, &report.mean_recall, &report.std_recall);
    mean_std(f1s, &report.mean_f1, &report.std_f1);
    mean_std(fprs, &report.mean_fpr, &report.std_fpr);
    mean_std(fnrs, &report.mean_fnr, &report.std_fnr);
    return report;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::json j;
    j["folds"] = nlohmann::json::array();
    for (const auto& m : report.folds) {
        nlohmann::json f;
        f["fold"] = m.fold;
        f["test_begin"] = m.test_begin;
        f["test_end"] = m.test_end;
        f["tp"] = m.tp;
        f["fp"] = m.fp;
        f["tn"] = m.tn;
        f["fn"] = m.fn;
        f["precision"] = m.precision;
        f["recall"] = m.recall;
        f["f1"] = m.f1;
        f["fpr"] = m.fpr;
        f["fnr"] = m.fnr;
        j["folds"].push_back(f);
    }
    j["notices"] = report.notices;
    j["mean"] = {{"precision", report.mean_precision},
                 {"recall", report.mean_recall},
                 {"f1", report.mean_f1},
                 {"fpr", report.mean_fpr},
                 {"fnr", report.mean_fnr}};
    j["std"] = {{"precision", report.std_precision},
                {"recall", report.std_recall},
                {"f1", report.std_f1},
                {"fpr", report.std_fpr},
                {"fnr", report.std_fnr}};
    return j.dump(2);
}

PotThreshold quantile_threshold(const std::vector<double>& scores, double q) {
    if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("eval: risk q must be in (0, 1)");
    PotThreshold t;
    t.q = q;
    t.fallback = true;
    t.n_total = static_cast<int64_t>(scores.size());
    t.tau = percentile(scores, 1.0 - q);
    t.u = t.tau;
    return t;
}

SeriesFrame drop_context_channels(const SeriesFrame& frame) {
    SeriesFrame out;
    out.timestamps = frame.timestamps;
    out.sample_period = frame.sample_period;
    for (int c : frame.target_channels()) {
        out.channel_names.push_back(frame.channel_names[static_cast<size_t>(c)]);
        out.roles.push_back(ChannelRole::target);
        out.values.push_back(frame.values[static_cast<size_t>(c)]);
        out.missing.push_back(frame.missing[static_cast<size_t>(c)]);
    }
    return out;
}

FoldDetector model_fold_detector(const DetectorOptions& opts) {
    return [opts](const SeriesFrame& frame, int64_t test_begin, int64_t test_end) {
        WindowSpec train_spec = opts.window;
        train_spec.stride = opts.train_stride;

        std::vector<SeriesFrame> segments;
        if (test_begin >= opts.window.length)
            segments.push_back(slice_frame(frame, 0, test_begin));
        if (frame.rows() - test_end >= opts.window.length)
            segments.push_back(slice_frame(frame, test_end, frame.rows() - test_end));
        if (segments.empty())
            throw std::runtime_error("eval: fold [" + std::to_string(test_begin) + ", " +
                                     std::to_string(test_end) + ") leaves no trainable segment");

        const auto targets = frame.target_channels();
        const auto contexts = frame.context_channels();
        Model model(opts.model, train_spec, static_cast<int>(targets.size()),
                    static_cast<int>(contexts.size()));
        std::vector<const SeriesFrame*> ptrs;
        for (const auto& s : segments) ptrs.push_back(&s);
        model.train(ptrs, opts.epochs, opts.lr, opts.lr_decay);

        std::vector<double> calibration;
        for (const auto& s : segments) {
            ScoreSeries cs = score(model, s);
            calibration.insert(calibration.end(), cs.scores.begin(), cs.scores.end());
        }
        const PotThreshold threshold = opts.threshold_fallback_only
                                           ? quantile_threshold(calibration, opts.q)
                                           : fit_pot(calibration, opts.q, opts.u_quantile);

        // lead the test block with past_len rows of history when available
        const int64_t begin0 = std::max<int64_t>(0, test_begin - opts.window.past_len);
        SeriesFrame test = slice_frame(frame, begin0, test_end - begin0);
        ScoreSeries ts = score(model, test);

        std::vector<uint8_t> preds(static_cast<size_t>(test_end - test_begin), 0);
        for (int64_t s = 0; s < ts.steps(); ++s) {
            const int64_t row = begin0 + ts.start_offset + s;
            if (row < test_begin) continue;  // warm-up rows belong to training
            preds[static_cast<size_t>(row - test_begin)] =
                ts.scores[static_cast<size_t>(s)] > threshold.tau ? 1 : 0;
        }
        return preds;
    };
}

std::vector<uint8_t> load_labels_csv(const std::string& path, const SeriesFrame& frame) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("labels: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || (line != "timestamp,label" && line != "timestamp,label\r"))
        throw std::runtime_error(path + ": expected a timestamp,label header");

    std::unordered_map<int64_t, int64_t> row_of;
    for (int64_t t = 0; t < frame.rows(); ++t) row_of[frame.timestamps[static_cast<size_t>(t)]] = t;

    std::vector<uint8_t> labels(static_cast<size_t>(frame.rows()), 0);
    int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(where + ": expected timestamp,label");
        std::string ts_text = line.substr(0, comma);
        std::string label = line.substr(comma + 1);
        int64_t ts = 0;
        bool numeric = false;
        try {
            size_t used = 0;
            ts = std::stoll(ts_text, &used);
            numeric = used == ts_text.size();
        } catch (const std::exception&) {
        }
        if (!numeric) {
            try {
                ts = parse_iso8601_utc(ts_text);
            } catch (const std::exception&) {
                throw std::runtime_error(where + ": unparseable timestamp '" + ts_text + "'");
            }
        }
        auto it = row_of.find(ts);
        if (it == row_of.end())
            throw std::runtime_error(where + ": timestamp " + ts_text + " is not in the series");
        if (label != "0" && label != "1")
            throw std::runtime_error(where + ": label must be 0 or 1, got '" + label + "'");
        labels[static_cast<size_t>(it->second)] = label == "1" ? 1 : 0;
    }
    return labels;
}

void write_labels_csv(const std::string& path, const SeriesFrame& frame,
                      const std::vector<uint8_t>& labels) {
    if (static_cast<int64_t>(labels.size()) != frame.rows())
        throw std::invalid_argument("labels: got " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(frame.rows()) + " rows");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("labels: cannot write " + path);
    out << "timestamp,label\n";
    for (int64_t t = 0; t < frame.rows(); ++t)
        out << frame.timestamps[static_cast<size_t>(t)] << ","
            << (labels[static_cast<size_t>(t)] ? 1 : 0) << "\n";
    if (!out) throw std::runtime_error("labels: cannot write " + path);
}

}  // namespace vigil
