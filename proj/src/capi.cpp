#include "vigil.h"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vigil/anomaly.hpp"
#include "vigil/checkpoint.hpp"
#include "vigil/eval.hpp"
#include "vigil/kv.hpp"
#include "vigil/model.hpp"
#include "vigil/report.hpp"
#include "vigil/series.hpp"
#include "vigil/synth.hpp"

struct vigil_frame {
    vigil::SeriesFrame f;
};

struct vigil_model {
    std::unique_ptr<vigil::Model> m;
    std::vector<std::string> names;
    std::vector<vigil::ChannelRole> roles;
};

struct vigil_scores {
    vigil::ScoreSeries s;
};

struct vigil_events {
    std::vector<vigil::AnomalyEvent> ev;
    vigil::PotThreshold threshold;
    std::vector<std::string> joined;  // channels_ranked per event, comma form

    void rebuild_joined() {
        joined.clear();
        for (const auto& e : ev) {
            std::string j;
            for (size_t i = 0; i < e.channels_ranked.size(); ++i) {
                if (i) j += ",";
                j += e.channels_ranked[i];
            }
            joined.push_back(std::move(j));
        }
    }
};

namespace {

thread_local std::string g_error;

template <typename F>
vigil_status guard(F&& body) {
    try {
        body();
        g_error.clear();
        return VIGIL_OK;
    } catch (const std::logic_error& e) {  // covers invalid_argument
        g_error = e.what();
        return VIGIL_ERR_INVALID;
    } catch (const std::exception& e) {
        g_error = e.what();
        return VIGIL_ERR_RUNTIME;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw std::invalid_argument(std::string("null argument: ") + what);
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::runtime_error("out of memory");
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

uint8_t* dup_bytes(const std::vector<uint8_t>& v) {
    uint8_t* out = static_cast<uint8_t*>(std::malloc(v.empty() ? 1 : v.size()));
    if (!out) throw std::runtime_error("out of memory");
    if (!v.empty()) std::memcpy(out, v.data(), v.size());
    return out;
}

vigil::ModelConfig config_of(const vigil_train_options& o) {
    vigil::ModelConfig cfg;
    cfg.blocks = o.blocks;
    cfg.heads = o.heads;
    cfg.embed_dim = o.embed_dim;
    cfg.patch = o.patch;
    cfg.anomaly_types = o.anomaly_types;
    cfg.anomaly_type = o.anomaly_type;
    cfg.ffn_hidden = o.ffn_hidden;
    cfg.dylinear_base = o.dylinear_base;
    cfg.dropout = o.dropout;
    cfg.seed = o.seed;
    cfg.channel_identity = o.channel_identity != 0;
    cfg.mask_context_future = o.mask_context_future != 0;
    return cfg;
}

vigil::WindowSpec window_of(const vigil_train_options& o) {
    vigil::WindowSpec spec;
    spec.length = o.window_length;
    spec.stride = o.train_stride;
    spec.past_len = o.window_past;
    spec.future_len = o.window_future;
    return spec;
}

vigil::PotThreshold threshold_of(const vigil_threshold& t) {
    vigil::PotThreshold out;
    out.u = t.u;
    out.xi = t.xi;
    out.sigma = t.sigma;
    out.q = t.q;
    out.tau = t.tau;
    out.n_total = t.n_total;
    out.n_exceed = t.n_exceed;
    out.fallback = t.fallback != 0;
    return out;
}

}  // namespace

extern "C" {

const char* vigil_last_error(void) { return g_error.c_str(); }

void vigil_free(void* p) { std::free(p); }

/* ---- series ------------------------------------------------------- */

vigil_status vigil_frame_from_csv(const char* csv_path, const char* schema_path,
                                  vigil_frame** out) {
    return guard([&] {
        require(csv_path, "csv_path");
        require(schema_path, "schema_path");
        require(out, "out");
        auto schema = vigil::load_schema(schema_path);
        auto frame = std::make_unique<vigil_frame>();
        frame->f = vigil::ingest_csv(csv_path, schema);
        *out = frame.release();
    });
}

void vigil_frame_free(vigil_frame* frame) { delete frame; }

int64_t vigil_frame_rows(const vigil_frame* frame) { return frame ? frame->f.rows() : 0; }

int vigil_frame_channel_count(const vigil_frame* frame) {
    return frame ? frame->f.channel_count() : 0;
}

const char* vigil_frame_channel_name(const vigil_frame* frame, int channel) {
    if (!frame || channel < 0 || channel >= frame->f.channel_count()) return nullptr;
    return frame->f.channel_names[static_cast<size_t>(channel)].c_str();
}

int vigil_frame_channel_is_target(const vigil_frame* frame, int channel) {
    if (!frame || channel < 0 || channel >= frame->f.channel_count()) return 0;
    return frame->f.roles[static_cast<size_t>(channel)] == vigil::ChannelRole::target ? 1 : 0;
}

int64_t vigil_frame_timestamp(const vigil_frame* frame, int64_t row) {
    if (!frame || row < 0 || row >= frame->f.rows()) return 0;
    return frame->f.timestamps[static_cast<size_t>(row)];
}

vigil_status vigil_frame_to_csv(const vigil_frame* frame, const char* path) {
    return guard([&] {
        require(frame, "frame");
        require(path, "path");
        vigil::write_series_csv(path, frame->f);
    });
}

vigil_status vigil_interpolate(const vigil_frame* frame, int method, int64_t max_gap,
                               vigil_frame** out, char** warnings) {
    return guard([&] {
        require(frame, "frame");
        require(out, "out");
        if (method != VIGIL_INTERP_NEAREST_NEIGHBOR && method != VIGIL_INTERP_NEAREST_WINDOW)
            throw std::invalid_argument("unknown interpolation method " + std::to_string(method));
        vigil::InterpResult r = vigil::interpolate(
            frame->f,
            method == VIGIL_INTERP_NEAREST_NEIGHBOR ? vigil::InterpMethod::nearest_neighbor
                                                    : vigil::InterpMethod::nearest_window,
            max_gap);
        auto wrapped = std::make_unique<vigil_frame>();
        wrapped->f = std::move(r.frame);
        if (warnings) {
            std::string joined;
            for (size_t i = 0; i < r.warnings.size(); ++i) {
                if (i) joined += "\n";
                joined += r.warnings[i];
            }
            *warnings = dup_string(joined);
        }
        *out = wrapped.release();
    });
}

vigil_status vigil_hr_hrv_from_waveform(const double* waveform, size_t len, double rate_hz,
                                        double step_s, double window_s, vigil_frame** out,
                                        char** warning) {
    return guard([&] {
        require(waveform, "waveform");
        require(out, "out");
        std::vector<double> wave(waveform, waveform + len);
        std::string note;
        vigil::BeatSeries beats = vigil::detect_beats(wave, rate_hz, &note);
        auto frame = std::make_unique<vigil_frame>();
        frame->f = vigil::hr_hrv_windows(beats, step_s, window_s);
        if (warning) *warning = dup_string(note);
        *out = frame.release();
    });
}

/* ---- model -------------------------------------------------------- */

void vigil_train_options_init(vigil_train_options* opts) {
    if (!opts) return;
    vigil::ModelConfig cfg;
    vigil::WindowSpec spec;
    opts->blocks = cfg.blocks;
    opts->heads = cfg.heads;
    opts->embed_dim = cfg.embed_dim;
    opts->patch = cfg.patch;
    opts->anomaly_types = cfg.anomaly_types;
    opts->anomaly_type = cfg.anomaly_type;
    opts->ffn_hidden = cfg.ffn_hidden;
    opts->dylinear_base = cfg.dylinear_base;
    opts->dropout = cfg.dropout;
    opts->seed = cfg.seed;
    opts->channel_identity = cfg.channel_identity ? 1 : 0;
    opts->mask_context_future = cfg.mask_context_future ? 1 : 0;
    opts->window_length = spec.length;
    opts->window_past = spec.past_len;
    opts->window_future = spec.future_len;
    opts->train_stride = 1;
    opts->epochs = 2;
    opts->lr = 5e-4;
    opts->lr_decay = 0.9;
}

vigil_status vigil_train(const vigil_frame* frame, const vigil_train_options* opts,
                         vigil_model** out) {
    return guard([&] {
        require(frame, "frame");
        require(opts, "opts");
        require(out, "out");
        if (opts->epochs < 1)
            throw std::invalid_argument("epochs must be >= 1, got " +
                                        std::to_string(opts->epochs));
        if (!(opts->lr > 0.0)) throw std::invalid_argument("lr must be positive");
        int n = 0, m = 0;
        for (vigil::ChannelRole r : frame->f.roles)
            (r == vigil::ChannelRole::target ? n : m) += 1;
        auto model = std::make_unique<vigil_model>();
        model->m = std::make_unique<vigil::Model>(config_of(*opts), window_of(*opts), n, m);
        model->names = frame->f.channel_names;
        model->roles = frame->f.roles;
        model->m->train({&frame->f}, opts->epochs, opts->lr, opts->lr_decay);
        *out = model.release();
    });
}

void vigil_model_free(vigil_model* model) { delete model; }

vigil_status vigil_model_save(const vigil_model* model, const char* path) {
    return guard([&] {
        require(model, "model");
        require(path, "path");
        vigil::save_checkpoint(path, *model->m, model->names, model->roles);
    });
}

vigil_status vigil_model_load(const char* path, vigil_model** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        vigil::LoadedModel loaded = vigil::load_checkpoint(path);
        auto model = std::make_unique<vigil_model>();
        model->m = std::move(loaded.model);
        model->names = std::move(loaded.channel_names);
        model->roles = std::move(loaded.roles);
        *out = model.release();
    });
}

int vigil_model_epochs(const vigil_model* model) {
    return model ? static_cast<int>(model->m->loss_trace().size()) : 0;
}

double vigil_model_epoch_loss(const vigil_model* model, int epoch) {
    if (!model || epoch < 0 || epoch >= static_cast<int>(model->m->loss_trace().size()))
        return std::nan("");
    return model->m->loss_trace()[static_cast<size_t>(epoch)];
}

vigil_status vigil_frame_for_model(const char* csv_path, const vigil_model* model,
                                   vigil_frame** out) {
    return guard([&] {
        require(csv_path, "csv_path");
        require(model, "model");
        require(out, "out");
        std::map<std::string, vigil::SchemaRole> schema;
        for (size_t i = 0; i < model->names.size(); ++i)
            schema[model->names[i]] = model->roles[i] == vigil::ChannelRole::target
                                          ? vigil::SchemaRole::target
                                          : vigil::SchemaRole::context;
        vigil::SeriesFrame raw = vigil::ingest_csv(csv_path, schema);

        // reorder into the model's channel layout
        vigil::SeriesFrame ordered;
        ordered.timestamps = raw.timestamps;
        ordered.sample_period = raw.sample_period;
        for (size_t i = 0; i < model->names.size(); ++i) {
            int at = raw.channel_index(model->names[i]);
            if (at < 0)
                throw std::runtime_error(std::string(csv_path) + ": missing channel '" +
                                         model->names[i] + "'");
            ordered.channel_names.push_back(model->names[i]);
            ordered.roles.push_back(model->roles[i]);
            ordered.values.push_back(std::move(raw.values[static_cast<size_t>(at)]));
            ordered.missing.push_back(std::move(raw.missing[static_cast<size_t>(at)]));
        }
        auto frame = std::make_unique<vigil_frame>();
        frame->f = std::move(ordered);
        *out = frame.release();
    });
}

/* ---- scoring, threshold, events ------------------------------------ */

vigil_status vigil_score(vigil_model* model, const vigil_frame* frame, vigil_scores** out) {
    return guard([&] {
        require(model, "model");
        require(frame, "frame");
        require(out, "out");
        auto scores = std::make_unique<vigil_scores>();
        scores->s = vigil::score(*model->m, frame->f);
        *out = scores.release();
    });
}

void vigil_scores_free(vigil_scores* scores) { delete scores; }

int64_t vigil_scores_steps(const vigil_scores* scores) { return scores ? scores->s.steps() : 0; }

vigil_status vigil_scores_to_csv(const vigil_scores* scores, const char* path) {
    return guard([&] {
        require(scores, "scores");
        require(path, "path");
        vigil::write_scores_csv(path, scores->s);
    });
}

vigil_status vigil_threshold_fit(const vigil_scores* scores, double q, double u_quantile,
                                 int fallback_only, vigil_threshold* out) {
    return guard([&] {
        require(scores, "scores");
        require(out, "out");
        vigil::PotThreshold t = fallback_only
                                    ? vigil::quantile_threshold(scores->s.scores, q)
                                    : vigil::fit_pot(scores->s, q, u_quantile);
        out->u = t.u;
        out->xi = t.xi;
        out->sigma = t.sigma;
        out->q = t.q;
        out->tau = t.tau;
        out->n_total = t.n_total;
        out->n_exceed = t.n_exceed;
        out->fallback = t.fallback ? 1 : 0;
    });
}

vigil_status vigil_detect(const vigil_scores* scores, const vigil_threshold* threshold,
                          int anomaly_type_id, vigil_events** out) {
    return guard([&] {
        require(scores, "scores");
        require(threshold, "threshold");
        require(out, "out");
        auto events = std::make_unique<vigil_events>();
        events->threshold = threshold_of(*threshold);
        events->ev = vigil::detect(scores->s, events->threshold, anomaly_type_id);
        events->rebuild_joined();
        *out = events.release();
    });
}

void vigil_events_free(vigil_events* events) { delete events; }

size_t vigil_events_count(const vigil_events* events) { return events ? events->ev.size() : 0; }

double vigil_events_threshold(const vigil_events* events) {
    return events ? events->threshold.tau : std::nan("");
}

vigil_status vigil_events_get(const vigil_events* events, size_t index, vigil_event_info* out) {
    return guard([&] {
        require(events, "events");
        require(out, "out");
        if (index >= events->ev.size())
            throw std::invalid_argument("event index " + std::to_string(index) +
                                        " out of range (count " +
                                        std::to_string(events->ev.size()) + ")");
        const vigil::AnomalyEvent& e = events->ev[index];
        out->start_row = e.start;
        out->end_row = e.end;
        out->time_begin = e.time_begin;
        out->time_end = e.time_end;
        out->peak_row = e.peak_index;
        out->peak_score = e.peak_score;
        out->anomaly_type_id = e.anomaly_type_id;
        out->channels_ranked = events->joined[index].c_str();
    });
}

vigil_status vigil_events_filter(vigil_events* events, int64_t min_rows) {
    return guard([&] {
        require(events, "events");
        if (min_rows < 1) throw std::invalid_argument("min_rows must be >= 1");
        std::vector<vigil::AnomalyEvent> kept;
        for (auto& e : events->ev)
            if (e.end - e.start + 1 >= min_rows) kept.push_back(std::move(e));
        events->ev = std::move(kept);
        events->rebuild_joined();
    });
}

vigil_status vigil_events_write_jsonl(const vigil_events* events, const char* path) {
    return guard([&] {
        require(events, "events");
        require(path, "path");
        vigil::write_events_jsonl(path, events->ev, events->threshold);
    });
}

vigil_status vigil_events_read_jsonl(const char* path, vigil_events** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        vigil::EventLog log = vigil::read_events_jsonl(path);
        auto events = std::make_unique<vigil_events>();
        events->ev = std::move(log.events);
        events->threshold.tau = log.threshold;
        events->threshold.fallback = log.fallback;
        events->rebuild_joined();
        *out = events.release();
    });
}

/* ---- labels and evaluation ----------------------------------------- */

vigil_status vigil_percentile_labels(const vigil_frame* frame, double low, double high,
                                     uint8_t** out, size_t* len) {
    return guard([&] {
        require(frame, "frame");
        require(out, "out");
        require(len, "len");
        std::vector<uint8_t> labels = vigil::percentile_labels(frame->f, low, high);
        *out = dup_bytes(labels);
        *len = labels.size();
    });
}

vigil_status vigil_labels_load_csv(const vigil_frame* frame, const char* path, uint8_t** out,
                                   size_t* len) {
    return guard([&] {
        require(frame, "frame");
        require(path, "path");
        require(out, "out");
        require(len, "len");
        std::vector<uint8_t> labels = vigil::load_labels_csv(path, frame->f);
        *out = dup_bytes(labels);
        *len = labels.size();
    });
}

vigil_status vigil_labels_write_csv(const vigil_frame* frame, const uint8_t* labels, size_t len,
                                    const char* path) {
    return guard([&] {
        require(frame, "frame");
        require(labels, "labels");
        require(path, "path");
        vigil::write_labels_csv(path, frame->f, std::vector<uint8_t>(labels, labels + len));
    });
}

void vigil_eval_options_init(vigil_eval_options* opts) {
    if (!opts) return;
    vigil_train_options_init(&opts->train);
    opts->q = 1e-3;
    opts->u_quantile = 0.98;
    opts->threshold_fallback_only = 0;
    opts->folds = 5;
}

vigil_status vigil_eval(const vigil_frame* frame, const uint8_t* labels, size_t len,
                        const vigil_eval_options* opts, char** report_json) {
    return guard([&] {
        require(frame, "frame");
        require(labels, "labels");
        require(opts, "opts");
        require(report_json, "report_json");
        vigil::DetectorOptions d;
        d.model = config_of(opts->train);
        d.window = window_of(opts->train);
        d.window.stride = 1;
        d.train_stride = opts->train.train_stride;
        d.epochs = opts->train.epochs;
        d.lr = opts->train.lr;
        d.lr_decay = opts->train.lr_decay;
        d.q = opts->q;
        d.u_quantile = opts->u_quantile;
        d.threshold_fallback_only = opts->threshold_fallback_only != 0;
        vigil::EvalReport report =
            vigil::kfold_f1(frame->f, std::vector<uint8_t>(labels, labels + len),
                            vigil::model_fold_detector(d), opts->folds);
        *report_json = dup_string(vigil::eval_report_json(report));
    });
}

/* ---- synthetic patients -------------------------------------------- */

vigil_status vigil_synth(const char* profile_path, double days, uint64_t seed,
                         vigil_frame** out_frame, uint8_t** out_labels, size_t* labels_len,
                         char** events_json) {
    return guard([&] {
        require(out_frame, "out_frame");
        vigil::SynthProfile profile =
            profile_path ? vigil::SynthProfile::from_file(profile_path) : vigil::SynthProfile{};
        vigil::SynthResult r = vigil::synth_patient(profile, days, seed);

        if (out_labels) {
            require(labels_len, "labels_len");
            std::vector<uint8_t> labels(static_cast<size_t>(r.frame.rows()), 0);
            for (const vigil::InjectedEvent& e : r.events)
                for (int64_t t = e.start; t <= e.end; ++t) labels[static_cast<size_t>(t)] = 1;
            *out_labels = dup_bytes(labels);
            *labels_len = labels.size();
        }
        if (events_json) {
            nlohmann::json arr = nlohmann::json::array();
            for (const vigil::InjectedEvent& e : r.events)
                arr.push_back({{"start", e.start}, {"end", e.end}, {"type", e.type}});
            *events_json = dup_string(arr.dump());
        }
        auto frame = std::make_unique<vigil_frame>();
        frame->f = std::move(r.frame);
        *out_frame = frame.release();
    });
}

/* ---- report bundles ------------------------------------------------- */

void vigil_report_options_init(vigil_report_options* opts) {
    if (!opts) return;
    vigil::ReportOptions d;
    opts->excerpt_before_min = d.excerpt_before_min;
    opts->excerpt_after_min = d.excerpt_after_min;
    opts->max_prompt_chars = d.max_prompt_chars;
}

vigil_status vigil_report(const char* out_dir, const vigil_events* events,
                          const vigil_frame* frame, const char* patient_kv_path,
                          const vigil_report_options* opts, char** summary_path) {
    return guard([&] {
        require(out_dir, "out_dir");
        require(events, "events");
        require(frame, "frame");
        vigil::PatientMeta patient;
        if (patient_kv_path) patient = vigil::parse_kv_file(patient_kv_path);
        vigil::ReportOptions ropts;
        if (opts) {
            ropts.excerpt_before_min = opts->excerpt_before_min;
            ropts.excerpt_after_min = opts->excerpt_after_min;
            ropts.max_prompt_chars = opts->max_prompt_chars;
        }
        vigil::ReportBundle bundle =
            vigil::write_report(out_dir, events->ev, events->threshold.tau, frame->f, patient,
                                ropts);
        if (summary_path) *summary_path = dup_string(bundle.summary_path);
    });
}

}  // extern "C"
