// vigil CLI: train, detect, eval, interpolate, synth and report wired
// end-to-end through the C API only. Exit codes: 0 success, 1 pipeline
// failure, 2 usage or configuration error.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vigil.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitPipeline = 1;
constexpr int kExitUsage = 2;

struct CliError {
    int code;
    std::string message;
};

// Maps a failed C API call onto the exit-code contract.
void check(vigil_status status) {
    if (status == VIGIL_OK) return;
    throw CliError{status == VIGIL_ERR_INVALID ? kExitUsage : kExitPipeline, vigil_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
    operator T*() const { return p; }
};

using Frame = Handle<vigil_frame, vigil_frame_free>;
using Model = Handle<vigil_model, vigil_model_free>;
using Scores = Handle<vigil_scores, vigil_scores_free>;
using Events = Handle<vigil_events, vigil_events_free>;

struct OwnedBuf {
    void* p = nullptr;
    ~OwnedBuf() { vigil_free(p); }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string iso_utc(int64_t t) {
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void ensure_out_dir(std::string& dir) {
    if (dir.empty()) dir = ".";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CliError{kExitUsage, "cannot create output directory '" + dir + "'"};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw CliError{kExitPipeline, "cannot write '" + path + "'"};
}

// ---- shared option groups ------------------------------------------

struct InterpArgs {
    std::string method = "nearest_neighbor";
    int64_t max_gap = 5;
};

void add_interp_flags(CLI::App* cmd, InterpArgs& args) {
    cmd->add_option("--interp-method", args.method, "gap filling method")
        ->check(CLI::IsMember({"nearest_neighbor", "nearest_window"}))
        ->capture_default_str();
    cmd->add_option("--max-gap", args.max_gap, "longest gap (rows) that gets filled")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

int interp_code(const std::string& method) {
    return method == "nearest_window" ? VIGIL_INTERP_NEAREST_WINDOW
                                      : VIGIL_INTERP_NEAREST_NEIGHBOR;
}

struct TrainArgs {
    vigil_train_options opts;
    bool paper_scale = false;
    CLI::App* cmd = nullptr;
};

void add_train_flags(CLI::App* cmd, TrainArgs& args) {
    vigil_train_options_init(&args.opts);
    args.cmd = cmd;
    cmd->add_option("--epochs", args.opts.epochs, "training epochs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--lr", args.opts.lr, "learning rate")->capture_default_str();
    cmd->add_option("--lr-decay", args.opts.lr_decay, "per-epoch learning rate decay")
        ->capture_default_str();
    cmd->add_option("--seed", args.opts.seed, "seed for every random choice in the run")
        ->capture_default_str();
    cmd->add_option("--blocks", args.opts.blocks, "transformer blocks")->capture_default_str();
    cmd->add_option("--heads", args.opts.heads, "attention heads")->capture_default_str();
    cmd->add_option("--embed-dim", args.opts.embed_dim, "embedding width")
        ->capture_default_str();
    cmd->add_option("--patch", args.opts.patch, "rows per token patch")->capture_default_str();
    cmd->add_option("--window-length", args.opts.window_length, "rows per training window")
        ->capture_default_str();
    cmd->add_option("--window-past", args.opts.window_past, "past rows per window")
        ->capture_default_str();
    cmd->add_option("--window-future", args.opts.window_future, "imputed future rows per window")
        ->capture_default_str();
    cmd->add_option("--train-stride", args.opts.train_stride, "stride between training windows")
        ->capture_default_str();
    cmd->add_option("--anomaly-types", args.opts.anomaly_types, "prompt slots in the model")
        ->capture_default_str();
    cmd->add_option("--anomaly-type", args.opts.anomaly_type, "prompt slot used for this run")
        ->capture_default_str();
    cmd->add_flag("--paper-scale", args.paper_scale,
                  "published model size (3 blocks, 128-dim embedding)");
}

// Explicit size flags win over --paper-scale.
void apply_paper_scale(TrainArgs& args) {
    if (!args.paper_scale) return;
    if (args.cmd->count("--blocks") == 0) args.opts.blocks = 3;
    if (args.cmd->count("--embed-dim") == 0) args.opts.embed_dim = 128;
}

// ---- per-patient fan-out -------------------------------------------

// Runs fn once per input on up to `jobs` threads; each pipeline is
// independent and its printed output is buffered to keep patients from
// interleaving. Returns the first nonzero exit code in input order.
int run_per_patient(const std::vector<std::string>& inputs, int jobs,
                    const std::function<void(const std::string&, std::string&)>& fn) {
    struct Result {
        int code = 0;
        std::string output;
        std::string error;
    };
    std::vector<Result> results(inputs.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < inputs.size(); i = next.fetch_add(1)) {
            try {
                fn(inputs[i], results[i].output);
            } catch (const CliError& e) {
                results[i].code = e.code;
                results[i].error = e.message;
            } catch (const std::exception& e) {
                results[i].code = kExitPipeline;
                results[i].error = e.what();
            }
        }
    };
    size_t workers = std::min<size_t>(std::max(jobs, 1), inputs.size());
    std::vector<std::thread> pool;
    for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int code = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        std::fputs(results[i].output.c_str(), stdout);
        if (results[i].code != 0) {
            std::fprintf(stderr, "vigil: %s: %s\n", inputs[i].c_str(),
                         results[i].error.c_str());
            if (code == 0) code = results[i].code;
        }
    }
    return code;
}

// ---- train ----------------------------------------------------------

struct TrainCmd {
    std::vector<std::string> data;
    std::string schema;
    std::string out_dir;
    InterpArgs interp;
    TrainArgs train;
    int jobs = 1;
};

int run_train(TrainCmd& cmd) {
    apply_paper_scale(cmd.train);
    ensure_out_dir(cmd.out_dir);
    return run_per_patient(cmd.data, cmd.jobs, [&](const std::string& input, std::string& log) {
        Frame raw;
        check(vigil_frame_from_csv(input.c_str(), cmd.schema.c_str(), &raw.p));
        Frame filled;
        char* warnings = nullptr;
        check(vigil_interpolate(raw, interp_code(cmd.interp.method), cmd.interp.max_gap,
                                &filled.p, &warnings));
        OwnedBuf wbuf{warnings};
        if (warnings != nullptr && warnings[0] != '\0')
            log += std::string(warnings) + "\n";
        Model model;
        check(vigil_train(filled, &cmd.train.opts, &model.p));
        std::string out = (fs::path(cmd.out_dir) / (stem_of(input) + ".vgck")).string();
        check(vigil_model_save(model, out.c_str()));
        int epochs = vigil_model_epochs(model);
        log += "trained " + stem_of(input) + ": " + std::to_string(vigil_frame_rows(filled)) +
               " rows, " + std::to_string(epochs) + " epochs, final loss " +
               fmt(vigil_model_epoch_loss(model, epochs - 1)) + "\n";
        log += "wrote " + out + "\n";
    });
}

// ---- detect ---------------------------------------------------------

struct DetectCmd {
    std::vector<std::string> data;
    std::string model_path;
    std::string out_dir;
    double q = 1e-3;
    double u_quantile = 0.98;
    bool fallback_only = false;
    int64_t min_duration = 3;
    int anomaly_type = 0;
    InterpArgs interp;
    int jobs = 1;
};

// --model names a checkpoint, or a directory holding <stem>.vgck per patient.
std::string checkpoint_for(const DetectCmd& cmd, const std::string& input) {
    fs::path p(cmd.model_path);
    if (fs::is_directory(p)) p /= stem_of(input) + ".vgck";
    if (!fs::exists(p)) throw CliError{kExitUsage, "checkpoint not found: " + p.string()};
    return p.string();
}

std::string event_table(const vigil_events* events, const vigil_threshold& threshold,
                        const std::string& title) {
    std::string out = "== " + title + " ==\n";
    out += "threshold " + fmt(threshold.tau) +
           (threshold.fallback ? " (empirical quantile fallback)\n" : " (pot fit)\n");
    size_t count = vigil_events_count(events);
    out += "events: " + std::to_string(count) + "\n";
    if (count == 0) return out;

    std::map<int, std::pair<size_t, double>> by_type;
    for (size_t i = 0; i < count; ++i) {
        vigil_event_info info;
        check(vigil_events_get(events, i, &info));
        auto& [n, peak] = by_type[info.anomaly_type_id];
        ++n;
        peak = std::max(peak, info.peak_score);
    }
    out += "type  count  peak score\n";
    for (const auto& [type, agg] : by_type) {
        char line[64];
        std::snprintf(line, sizeof line, "%4d  %5zu  %10.6g\n", type, agg.first, agg.second);
        out += line;
    }
    for (size_t i = 0; i < count; ++i) {
        vigil_event_info info;
        check(vigil_events_get(events, i, &info));
        char line[64];
        std::snprintf(line, sizeof line, "event %03zu  ", i);
        out += line + iso_utc(info.time_begin) + " .. " + iso_utc(info.time_end) + "  peak " +
               fmt(info.peak_score) + "  type " + std::to_string(info.anomaly_type_id) +
               "  channels " + info.channels_ranked + "\n";
    }
    return out;
}

int run_detect(DetectCmd& cmd) {
    ensure_out_dir(cmd.out_dir);
    return run_per_patient(cmd.data, cmd.jobs, [&](const std::string& input, std::string& log) {
        Model model;
        check(vigil_model_load(checkpoint_for(cmd, input).c_str(), &model.p));
        Frame raw;
        check(vigil_frame_for_model(input.c_str(), model, &raw.p));
        Frame filled;
        check(vigil_interpolate(raw, interp_code(cmd.interp.method), cmd.interp.max_gap,
                                &filled.p, nullptr));
        Scores scores;
        check(vigil_score(model, filled, &scores.p));
        vigil_threshold threshold;
        check(vigil_threshold_fit(scores, cmd.q, cmd.u_quantile, cmd.fallback_only ? 1 : 0,
                                  &threshold));
        Events events;
        check(vigil_detect(scores, &threshold, cmd.anomaly_type, &events.p));
        check(vigil_events_filter(events, cmd.min_duration));

        std::string stem = stem_of(input);
        std::string scores_path = (fs::path(cmd.out_dir) / (stem + "_scores.csv")).string();
        std::string events_path = (fs::path(cmd.out_dir) / (stem + "_events.jsonl")).string();
        check(vigil_scores_to_csv(scores, scores_path.c_str()));
        check(vigil_events_write_jsonl(events, events_path.c_str()));

        if (cmd.fallback_only) log += "threshold: empirical quantile forced by flag\n";
        log += event_table(events, threshold, stem);
        log += "wrote " + scores_path + "\n";
        log += "wrote " + events_path + "\n";
    });
}

// ---- eval -----------------------------------------------------------

struct EvalCmd {
    std::string data;
    std::string schema;
    std::string labels;
    std::string out_dir;
    double q = 1e-3;
    double u_quantile = 0.98;
    bool fallback_only = false;
    int folds = 5;
    InterpArgs interp;
    TrainArgs train;
};

int run_eval(EvalCmd& cmd) {
    apply_paper_scale(cmd.train);
    ensure_out_dir(cmd.out_dir);
    Frame raw;
    check(vigil_frame_from_csv(cmd.data.c_str(), cmd.schema.c_str(), &raw.p));
    uint8_t* labels = nullptr;
    size_t len = 0;
    check(vigil_labels_load_csv(raw, cmd.labels.c_str(), &labels, &len));
    OwnedBuf lbuf{labels};
    Frame filled;
    check(vigil_interpolate(raw, interp_code(cmd.interp.method), cmd.interp.max_gap, &filled.p,
                            nullptr));

    vigil_eval_options opts;
    vigil_eval_options_init(&opts);
    opts.train = cmd.train.opts;
    opts.q = cmd.q;
    opts.u_quantile = cmd.u_quantile;
    opts.threshold_fallback_only = cmd.fallback_only ? 1 : 0;
    opts.folds = cmd.folds;
    char* report = nullptr;
    check(vigil_eval(filled, labels, len, &opts, &report));
    OwnedBuf rbuf{report};

    std::string path = (fs::path(cmd.out_dir) / "eval_report.json").string();
    write_text(path, std::string(report) + "\n");

    nlohmann::json j = nlohmann::json::parse(report);
    for (const auto& f : j["folds"])
        std::printf("fold %d  f1 %s  fpr %s\n", f["fold"].get<int>(),
                    fmt(f["f1"].get<double>()).c_str(), fmt(f["fpr"].get<double>()).c_str());
    for (const auto& notice : j["notices"])
        std::printf("notice: %s\n", notice.get<std::string>().c_str());
    std::printf("mean f1 %s +- %s  fpr %s  (%zu scored folds)\n",
                fmt(j["mean"]["f1"].get<double>()).c_str(),
                fmt(j["std"]["f1"].get<double>()).c_str(),
                fmt(j["mean"]["fpr"].get<double>()).c_str(), j["folds"].size());
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

// ---- interpolate ----------------------------------------------------

struct InterpolateCmd {
    std::string data;
    std::string schema;
    std::string out_dir;
    InterpArgs interp;
};

int run_interpolate(InterpolateCmd& cmd) {
    ensure_out_dir(cmd.out_dir);
    Frame raw;
    check(vigil_frame_from_csv(cmd.data.c_str(), cmd.schema.c_str(), &raw.p));
    Frame filled;
    char* warnings = nullptr;
    check(vigil_interpolate(raw, interp_code(cmd.interp.method), cmd.interp.max_gap, &filled.p,
                            &warnings));
    OwnedBuf wbuf{warnings};
    std::string path = (fs::path(cmd.out_dir) / (stem_of(cmd.data) + "_filled.csv")).string();
    check(vigil_frame_to_csv(filled, path.c_str()));
    if (warnings != nullptr && warnings[0] != '\0') std::printf("%s\n", warnings);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

// ---- synth ----------------------------------------------------------

struct SynthCmd {
    std::string profile;
    std::string out_dir;
    double days = 14.0;
    uint64_t seed = 1;
};

int run_synth(SynthCmd& cmd) {
    ensure_out_dir(cmd.out_dir);
    Frame frame;
    uint8_t* labels = nullptr;
    size_t len = 0;
    char* events_json = nullptr;
    check(vigil_synth(cmd.profile.empty() ? nullptr : cmd.profile.c_str(), cmd.days, cmd.seed,
                      &frame.p, &labels, &len, &events_json));
    OwnedBuf lbuf{labels};
    OwnedBuf ebuf{events_json};

    fs::path out(cmd.out_dir);
    std::string csv_path = (out / "patient.csv").string();
    std::string labels_path = (out / "labels.csv").string();
    std::string events_path = (out / "events.json").string();
    std::string schema_path = (out / "schema.cfg").string();

    check(vigil_frame_to_csv(frame, csv_path.c_str()));
    check(vigil_labels_write_csv(frame, labels, len, labels_path.c_str()));
    write_text(events_path, std::string(events_json) + "\n");
    std::string schema;
    for (int c = 0; c < vigil_frame_channel_count(frame); ++c)
        schema += "channel." + std::string(vigil_frame_channel_name(frame, c)) + " = " +
                  (vigil_frame_channel_is_target(frame, c) ? "target" : "context") + "\n";
    write_text(schema_path, schema);

    size_t injected = nlohmann::json::parse(events_json).size();
    std::printf("synth: %lld rows, %d channels, %zu injected events\n",
                static_cast<long long>(vigil_frame_rows(frame)),
                vigil_frame_channel_count(frame), injected);
    for (const std::string& p : {csv_path, labels_path, events_path, schema_path})
        std::printf("wrote %s\n", p.c_str());
    return 0;
}

// ---- report ---------------------------------------------------------

struct ReportCmd {
    std::string events;
    std::string data;
    std::string schema;
    std::string patient;
    std::string out_dir;
    vigil_report_options opts;
};

int run_report(ReportCmd& cmd) {
    ensure_out_dir(cmd.out_dir);
    Frame frame;
    check(vigil_frame_from_csv(cmd.data.c_str(), cmd.schema.c_str(), &frame.p));
    Events events;
    check(vigil_events_read_jsonl(cmd.events.c_str(), &events.p));
    char* summary = nullptr;
    check(vigil_report(cmd.out_dir.c_str(), events, frame,
                       cmd.patient.empty() ? nullptr : cmd.patient.c_str(), &cmd.opts,
                       &summary));
    OwnedBuf sbuf{summary};
    std::printf("events = %zu\n", vigil_events_count(events));
    std::printf("wrote %s\n", summary);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contextual anomaly detection for wearable and ambient time series"};
    app.require_subcommand(1);

    TrainCmd train;
    CLI::App* train_cmd = app.add_subcommand("train", "fit a per-patient model");
    train_cmd->add_option("--data", train.data, "input CSV, repeatable for several patients")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--schema", train.schema, "channel role map (key = value)")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train.out_dir, "output directory")
        ->envname("VIGIL_OUT_DIR")
        ->default_val(".");
    train_cmd->add_option("--jobs", train.jobs, "patients processed in parallel")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_interp_flags(train_cmd, train.interp);
    add_train_flags(train_cmd, train.train);

    DetectCmd detect;
    CLI::App* detect_cmd = app.add_subcommand("detect", "score a series and flag anomalies");
    detect_cmd->add_option("--data", detect.data, "input CSV, repeatable for several patients")
        ->required()
        ->check(CLI::ExistingFile);
    detect_cmd
        ->add_option("--model", detect.model_path,
                     "checkpoint file, or directory of <patient>.vgck files")
        ->required()
        ->check(CLI::ExistingPath);
    detect_cmd->add_option("--out", detect.out_dir, "output directory")
        ->envname("VIGIL_OUT_DIR")
        ->default_val(".");
    detect_cmd->add_option("--q", detect.q, "target risk: expected share of flagged steps")
        ->capture_default_str();
    detect_cmd->add_option("--u-quantile", detect.u_quantile, "tail-fit start quantile")
        ->capture_default_str();
    detect_cmd->add_flag("--threshold-fallback-only", detect.fallback_only,
                         "skip the tail fit and use the empirical quantile");
    detect_cmd
        ->add_option("--min-duration", detect.min_duration,
                     "drop events spanning fewer rows than this")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    detect_cmd->add_option("--anomaly-type", detect.anomaly_type, "type id stamped on events")
        ->capture_default_str();
    detect_cmd->add_option("--jobs", detect.jobs, "patients processed in parallel")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_interp_flags(detect_cmd, detect.interp);

    EvalCmd eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "k-fold cross validation against labels");
    eval_cmd->add_option("--data", eval.data, "input CSV")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--schema", eval.schema, "channel role map")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--labels", eval.labels, "timestamp,label CSV")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval.out_dir, "output directory")
        ->envname("VIGIL_OUT_DIR")
        ->default_val(".");
    eval_cmd->add_option("--folds", eval.folds, "contiguous folds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    eval_cmd->add_option("--q", eval.q, "target risk: expected share of flagged steps")
        ->capture_default_str();
    eval_cmd->add_option("--u-quantile", eval.u_quantile, "tail-fit start quantile")
        ->capture_default_str();
    eval_cmd->add_flag("--threshold-fallback-only", eval.fallback_only,
                       "skip the tail fit and use the empirical quantile");
    add_interp_flags(eval_cmd, eval.interp);
    add_train_flags(eval_cmd, eval.train);

    InterpolateCmd interp;
    CLI::App* interp_cmd = app.add_subcommand("interpolate", "fill short gaps in a series");
    interp_cmd->add_option("--data", interp.data, "input CSV")
        ->required()
        ->check(CLI::ExistingFile);
    interp_cmd->add_option("--schema", interp.schema, "channel role map")
        ->required()
        ->check(CLI::ExistingFile);
    interp_cmd->add_option("--out", interp.out_dir, "output directory")
        ->envname("VIGIL_OUT_DIR")
        ->default_val(".");
    add_interp_flags(interp_cmd, interp.interp);

    SynthCmd synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled patient");
    synth_cmd->add_option("--profile", synth.profile, "key = value generator overrides")
        ->check(CLI::ExistingFile);
    synth_cmd->add_option("--days", synth.days, "length of the series")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "seed for every random choice in the run")
        ->capture_default_str();
    synth_cmd->add_option("--out", synth.out_dir, "output directory")
        ->envname("VIGIL_OUT_DIR")
        ->default_val(".");

    ReportCmd report;
    vigil_report_options_init(&report.opts);
    CLI::App* report_cmd =
        app.add_subcommand("report", "write explanation prompts and plot slices per event");
    report_cmd->add_option("--events", report.events, "events JSONL from detect")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--data", report.data, "input CSV the events refer to")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--schema", report.schema, "channel role map")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--patient", report.patient, "patient metadata (key = value)")
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--out", report.out_dir, "output directory")
        ->envname("VIGIL_OUT_DIR")
        ->default_val(".");
    report_cmd
        ->add_option("--before-min", report.opts.excerpt_before_min,
                     "excerpt minutes before each event")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    report_cmd
        ->add_option("--after-min", report.opts.excerpt_after_min,
                     "excerpt minutes after each event")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    report_cmd
        ->add_option("--max-prompt-chars", report.opts.max_prompt_chars,
                     "hard cap on prompt length")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return run_train(train);
        if (detect_cmd->parsed()) return run_detect(detect);
        if (eval_cmd->parsed()) return run_eval(eval);
        if (interp_cmd->parsed()) return run_interpolate(interp);
        if (synth_cmd->parsed()) return run_synth(synth);
        if (report_cmd->parsed()) return run_report(report);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    } catch (const CliError& e) {
        std::fprintf(stderr, "vigil: %s\n", e.message.c_str());
        return e.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "vigil: %s\n", e.what());
        return kExitPipeline;
    }
    return 0;
}
