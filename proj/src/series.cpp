#include "vigil/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "vigil/kv.hpp"

namespace vigil {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::vector<int> SeriesFrame::target_channels() const {
    std::vector<int> out;
    for (int c = 0; c < channel_count(); ++c)
        if (roles[static_cast<size_t>(c)] == ChannelRole::target) out.push_back(c);
    return out;
}

std::vector<int> SeriesFrame::context_channels() const {
    std::vector<int> out;
    for (int c = 0; c < channel_count(); ++c)
        if (roles[static_cast<size_t>(c)] == ChannelRole::context) out.push_back(c);
    return out;
}

int SeriesFrame::channel_index(const std::string& name) const {
    for (int c = 0; c < channel_count(); ++c)
        if (channel_names[static_cast<size_t>(c)] == name) return c;
    return -1;
}

void WindowSpec::validate() const {
    if (past_len + future_len != length)
        throw std::invalid_argument("window spec: past_len + future_len must equal length (" +
                                    std::to_string(past_len) + " + " + std::to_string(future_len) +
                                    " != " + std::to_string(length) + ")");
    if (stride < 1) throw std::invalid_argument("window spec: stride must be >= 1");
    if (future_len < 1) throw std::invalid_argument("window spec: future_len must be >= 1");
    if (past_len < 0) throw std::invalid_argument("window spec: past_len must be >= 0");
}

std::map<std::string, SchemaRole> load_schema(const std::string& path) {
    std::map<std::string, SchemaRole> out;
    for (const auto& [key, val] : parse_kv_file(path)) {
        if (key.rfind("channel.", 0) != 0)
            throw std::runtime_error("schema " + path + ": unexpected key '" + key +
                                     "' (expected channel.<name>)");
        std::string name = key.substr(8);
        if (name.empty()) throw std::runtime_error("schema " + path + ": empty channel name");
        SchemaRole role;
        if (val == "target")
            role = SchemaRole::target;
        else if (val == "context")
            role = SchemaRole::context;
        else if (val == "ignore")
            role = SchemaRole::ignore;
        else
            throw std::runtime_error("schema " + path + ": channel '" + name + "' has unknown role '" +
                                     val + "' (target|context|ignore)");
        out[name] = role;
    }
    return out;
}

// ---- CSV ---------------------------------------------------------------

namespace {

// RFC-4180: quoted fields may contain commas, newlines, and doubled quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
            continue;
        }
        switch (ch) {
            case '"':
                in_quotes = true;
                any = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                any = true;
                break;
            case '\r':
                break;
            case '\n':
                if (any || !field.empty() || !record.empty()) {
                    record.push_back(std::move(field));
                    field.clear();
                    records.push_back(std::move(record));
                    record.clear();
                    any = false;
                }
                break;
            default:
                field += ch;
                any = true;
        }
    }
    if (any || !field.empty() || !record.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

bool parse_epoch_seconds(const std::string& s, int64_t* out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    *out = static_cast<int64_t>(v);
    return true;
}

// YYYY-MM-DD[T ]HH:MM:SS with optional trailing Z, interpreted as UTC.
bool parse_iso8601(const std::string& s, int64_t* out) {
    int y, mo, d, h, mi, se;
    char sep;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &se) != 7)
        return false;
    if (sep != 'T' && sep != ' ') return false;
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    time_t t = timegm(&tm);
    if (t == static_cast<time_t>(-1)) return false;
    *out = static_cast<int64_t>(t);
    return true;
}

int64_t parse_timestamp(const std::string& raw, int64_t row_for_error) {
    std::string s = kv_trim(raw);
    int64_t t;
    if (parse_epoch_seconds(s, &t)) return t;
    if (parse_iso8601(s, &t)) return t;
    throw std::runtime_error("csv row " + std::to_string(row_for_error) + ": unparseable timestamp '" +
                             s + "'");
}

bool parse_cell(const std::string& raw, double* out) {
    std::string s = kv_trim(raw);
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end != s.c_str() + s.size() || !std::isfinite(v)) return false;
    *out = v;
    return true;
}

}  // namespace

SeriesFrame ingest_csv(const std::string& path, const std::map<std::string, SchemaRole>& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    auto records = parse_csv(buf.str());
    if (records.size() < 2) throw std::runtime_error("csv " + path + ": need a header row and data rows");

    const auto& header = records[0];
    if (header.size() < 2) throw std::runtime_error("csv " + path + ": need a timestamp column and channels");

    // Map CSV columns to frame channels via the schema; `ignore` drops a column.
    struct Col {
        size_t csv_index;
        std::string name;
        ChannelRole role;
    };
    std::vector<Col> cols;
    for (size_t j = 1; j < header.size(); ++j) {
        std::string name = kv_trim(header[j]);
        auto it = schema.find(name);
        if (it == schema.end())
            throw std::runtime_error("csv " + path + ": column '" + name + "' has no role in the schema");
        if (it->second == SchemaRole::ignore) continue;
        cols.push_back({j, name, it->second == SchemaRole::target ? ChannelRole::target
                                                                  : ChannelRole::context});
    }
    int n_target = 0;
    for (const auto& c : cols) n_target += c.role == ChannelRole::target ? 1 : 0;
    if (n_target == 0) throw std::runtime_error("csv " + path + ": schema assigns zero target channels");

    const int64_t n_rows = static_cast<int64_t>(records.size()) - 1;
    std::vector<int64_t> ts(static_cast<size_t>(n_rows));
    for (int64_t i = 0; i < n_rows; ++i) {
        const auto& rec = records[static_cast<size_t>(i + 1)];
        if (rec.empty()) throw std::runtime_error("csv row " + std::to_string(i + 2) + ": empty record");
        ts[static_cast<size_t>(i)] = parse_timestamp(rec[0], i + 2);
        if (i > 0 && ts[static_cast<size_t>(i)] <= ts[static_cast<size_t>(i - 1)])
            throw std::runtime_error("csv row " + std::to_string(i + 2) +
                                     ": timestamp not strictly increasing");
    }

    // Modal inter-row spacing; ties prefer the smallest spacing.
    int64_t period = 1;
    if (n_rows >= 2) {
        std::map<int64_t, int64_t> freq;
        for (int64_t i = 1; i < n_rows; ++i) freq[ts[static_cast<size_t>(i)] - ts[static_cast<size_t>(i - 1)]]++;
        int64_t best_count = 0;
        for (const auto& [gap, count] : freq) {
            if (count > best_count) {
                best_count = count;
                period = gap;
            }
        }
    }

    const int64_t t0 = ts[0];
    const int64_t grid_rows =
        n_rows >= 2 ? (ts[static_cast<size_t>(n_rows - 1)] - t0 + period / 2) / period + 1 : 1;

    SeriesFrame f;
    f.sample_period = period;
    f.timestamps.resize(static_cast<size_t>(grid_rows));
    for (int64_t i = 0; i < grid_rows; ++i) f.timestamps[static_cast<size_t>(i)] = t0 + i * period;
    for (const auto& c : cols) {
        f.channel_names.push_back(c.name);
        f.roles.push_back(c.role);
        f.values.emplace_back(static_cast<size_t>(grid_rows), kMissing);
        f.missing.emplace_back(static_cast<size_t>(grid_rows), uint8_t{1});
    }

    std::vector<uint8_t> grid_taken(static_cast<size_t>(grid_rows), 0);
    for (int64_t i = 0; i < n_rows; ++i) {
        int64_t g = (ts[static_cast<size_t>(i)] - t0 + period / 2) / period;
        g = std::clamp<int64_t>(g, 0, grid_rows - 1);
        if (grid_taken[static_cast<size_t>(g)]) continue;  // jitter collision, first row wins
        grid_taken[static_cast<size_t>(g)] = 1;
        const auto& rec = records[static_cast<size_t>(i + 1)];
        for (size_t ci = 0; ci < cols.size(); ++ci) {
            if (cols[ci].csv_index >= rec.size()) continue;
            double v;
            if (parse_cell(rec[cols[ci].csv_index], &v)) {
                f.values[ci][static_cast<size_t>(g)] = v;
                f.missing[ci][static_cast<size_t>(g)] = 0;
            }
        }
    }
    return f;
}

std::vector<Gap> find_gaps(const SeriesFrame& frame) {
    std::vector<Gap> gaps;
    const int64_t T = frame.rows();
    for (int c = 0; c < frame.channel_count(); ++c) {
        const auto& m = frame.missing[static_cast<size_t>(c)];
        int64_t t = 0;
        while (t < T) {
            if (!m[static_cast<size_t>(t)]) {
                ++t;
                continue;
            }
            int64_t start = t;
            while (t < T && m[static_cast<size_t>(t)]) ++t;
            gaps.push_back({c, start, t - start});
        }
    }
    return gaps;
}

namespace {

// Nearest observed value on the channel, earlier wins ties. Donor mask is
// the pre-interpolation mask so fills never chain off other fills.
bool nearest_observed(const std::vector<double>& v, const std::vector<uint8_t>& miss, int64_t t,
                      double* out) {
    const int64_t T = static_cast<int64_t>(v.size());
    for (int64_t d = 1; d < T; ++d) {
        int64_t left = t - d, right = t + d;
        if (left >= 0 && !miss[static_cast<size_t>(left)]) {
            *out = v[static_cast<size_t>(left)];
            return true;
        }
        if (right < T && !miss[static_cast<size_t>(right)]) {
            *out = v[static_cast<size_t>(right)];
            return true;
        }
    }
    return false;
}

bool fill_nearest_neighbor(const std::vector<double>& v, const std::vector<uint8_t>& miss,
                           const Gap& gap, std::vector<double>* fill) {
    fill->resize(static_cast<size_t>(gap.length));
    for (int64_t i = 0; i < gap.length; ++i) {
        double x;
        if (!nearest_observed(v, miss, gap.start + i, &x)) return false;
        (*fill)[static_cast<size_t>(i)] = x;
    }
    return true;
}

// Donor: fully-observed run of gap.length samples whose center is nearest
// the gap center; earlier wins ties. Copied values get a constant shift so
// the segment lines up with the observed neighbors of the gap.
bool fill_nearest_window(const std::vector<double>& v, const std::vector<uint8_t>& miss,
                         const Gap& gap, std::vector<double>* fill) {
    const int64_t T = static_cast<int64_t>(v.size());
    const int64_t g = gap.length;
    if (g > T) return false;

    int64_t run = 0;  // observed samples ending at position t
    int64_t best_start = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    const double gap_center = static_cast<double>(gap.start) + static_cast<double>(g - 1) / 2.0;
    for (int64_t t = 0; t < T; ++t) {
        run = miss[static_cast<size_t>(t)] ? 0 : run + 1;
        if (run < g) continue;
        int64_t start = t - g + 1;
        double center = static_cast<double>(start) + static_cast<double>(g - 1) / 2.0;
        double dist = std::abs(center - gap_center);
        if (dist < best_dist) {  // strict: earlier candidate keeps ties
            best_dist = dist;
            best_start = start;
        }
    }
    if (best_start < 0) return false;

    double shift = 0.0;
    int sides = 0;
    if (gap.start > 0 && !miss[static_cast<size_t>(gap.start - 1)]) {
        shift += v[static_cast<size_t>(gap.start - 1)] - v[static_cast<size_t>(best_start)];
        ++sides;
    }
    if (gap.start + g < T && !miss[static_cast<size_t>(gap.start + g)]) {
        shift += v[static_cast<size_t>(gap.start + g)] - v[static_cast<size_t>(best_start + g - 1)];
        ++sides;
    }
    if (sides > 0) shift /= static_cast<double>(sides);

    fill->resize(static_cast<size_t>(g));
    for (int64_t i = 0; i < g; ++i)
        (*fill)[static_cast<size_t>(i)] = v[static_cast<size_t>(best_start + i)] + shift;
    return true;
}

}  // namespace

InterpResult interpolate(const SeriesFrame& frame, InterpMethod method, int64_t max_gap) {
    if (max_gap < 0) throw std::invalid_argument("interpolate: max_gap must be >= 0");
    InterpResult res;
    res.frame = frame;
    auto gaps = find_gaps(frame);
    for (const Gap& gap : gaps) {
        if (gap.length > max_gap) continue;
        const auto& src_v = frame.values[static_cast<size_t>(gap.channel)];
        const auto& src_m = frame.missing[static_cast<size_t>(gap.channel)];
        std::vector<double> fill;
        bool ok = false;
        if (method == InterpMethod::nearest_window) {
            ok = fill_nearest_window(src_v, src_m, gap, &fill);
            if (!ok) {
                res.warnings.push_back("channel " + frame.channel_names[static_cast<size_t>(gap.channel)] +
                                       ": no fully-observed donor of length " + std::to_string(gap.length) +
                                       " for gap at row " + std::to_string(gap.start) +
                                       ", fell back to nearest_neighbor");
                ok = fill_nearest_neighbor(src_v, src_m, gap, &fill);
            }
        } else {
            ok = fill_nearest_neighbor(src_v, src_m, gap, &fill);
        }
        if (!ok) {
            res.warnings.push_back("channel " + frame.channel_names[static_cast<size_t>(gap.channel)] +
                                   ": no observed values, gap at row " + std::to_string(gap.start) +
                                   " left unfilled");
            continue;
        }
        auto& dst_v = res.frame.values[static_cast<size_t>(gap.channel)];
        auto& dst_m = res.frame.missing[static_cast<size_t>(gap.channel)];
        for (int64_t i = 0; i < gap.length; ++i) {
            dst_v[static_cast<size_t>(gap.start + i)] = fill[static_cast<size_t>(i)];
            dst_m[static_cast<size_t>(gap.start + i)] = 0;
        }
    }
    return res;
}

double mase(const std::vector<double>& predicted, const std::vector<double>& actual,
            const std::vector<double>& training_ref) {
    if (predicted.size() != actual.size())
        throw std::invalid_argument("mase: predicted and actual lengths differ");
    if (predicted.size() < 2) throw std::invalid_argument("mase: need length >= 2");
    if (training_ref.size() < 2) throw std::invalid_argument("mase: training_ref needs length >= 2");

    double mae = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) mae += std::abs(predicted[i] - actual[i]);
    mae /= static_cast<double>(predicted.size());

    double naive = 0.0;
    for (size_t i = 1; i < training_ref.size(); ++i)
        naive += std::abs(training_ref[i] - training_ref[i - 1]);
    naive /= static_cast<double>(training_ref.size() - 1);

    if (naive == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return mae / naive;
}

double mase(const std::vector<std::vector<double>>& predicted,
            const std::vector<std::vector<double>>& actual,
            const std::vector<std::vector<double>>& training_ref) {
    if (predicted.size() != actual.size() || predicted.size() != training_ref.size())
        throw std::invalid_argument("mase: channel counts differ");
    if (predicted.empty()) throw std::invalid_argument("mase: no channels");
    double sum = 0.0;
    for (size_t c = 0; c < predicted.size(); ++c) sum += mase(predicted[c], actual[c], training_ref[c]);
    return sum / static_cast<double>(predicted.size());
}

double dtw(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty series");
    const size_t n = a.size(), m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // one rolling row of the accumulated-cost matrix
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (size_t j = 1; j <= m; ++j) {
            double cost = std::abs(a[i - 1] - b[j - 1]);
            cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::vector<WindowView> sliding_windows(const SeriesFrame& frame, const WindowSpec& spec,
                                        std::string* warning) {
    spec.validate();
    std::vector<WindowView> out;
    const int64_t T = frame.rows();
    if (spec.length > T) {
        if (warning)
            *warning = "window length " + std::to_string(spec.length) + " exceeds series length " +
                       std::to_string(T) + ", no windows produced";
        return out;
    }
    for (int64_t off = 0; off + spec.length <= T; off += spec.stride) {
        WindowView w;
        w.frame = &frame;
        w.offset = off;
        w.length = spec.length;
        w.time_begin = frame.timestamps[static_cast<size_t>(off)];
        w.time_end = frame.timestamps[static_cast<size_t>(off + spec.length - 1)];
        out.push_back(w);
    }
    return out;
}

SeriesFrame slice_frame(const SeriesFrame& frame, int64_t start, int64_t count) {
    if (start < 0 || count < 1 || start + count > frame.rows())
        throw std::invalid_argument("slice_frame: rows [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") outside series of length " +
                                    std::to_string(frame.rows()));
    SeriesFrame out;
    out.sample_period = frame.sample_period;
    out.channel_names = frame.channel_names;
    out.roles = frame.roles;
    out.timestamps.assign(frame.timestamps.begin() + start, frame.timestamps.begin() + start + count);
    for (int c = 0; c < frame.channel_count(); ++c) {
        const auto& v = frame.values[static_cast<size_t>(c)];
        const auto& m = frame.missing[static_cast<size_t>(c)];
        out.values.emplace_back(v.begin() + start, v.begin() + start + count);
        out.missing.emplace_back(m.begin() + start, m.begin() + start + count);
    }
    return out;
}

void write_series_csv(const std::string& path, const SeriesFrame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("series: cannot write " + path);
    out << "timestamp";
    for (const std::string& name : frame.channel_names) out << "," << name;
    out << "\n";
    char buf[40];
    for (int64_t t = 0; t < frame.rows(); ++t) {
        out << frame.timestamps[static_cast<size_t>(t)];
        for (int c = 0; c < frame.channel_count(); ++c) {
            out << ",";
            if (!frame.missing[static_cast<size_t>(c)][static_cast<size_t>(t)]) {
                std::snprintf(buf, sizeof(buf), "%.17g",
                              frame.values[static_cast<size_t>(c)][static_cast<size_t>(t)]);
                out << buf;
            }
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("series: cannot write " + path);
}

}  // namespace vigil
