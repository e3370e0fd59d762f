#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vigil/model.hpp"
#include "vigil/rng.hpp"
#include "vigil/series.hpp"

using namespace vigil;
using vigil::testing::rel_err;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Multi-channel frame; NaN cells are missing.
SeriesFrame make_frame(const std::vector<std::string>& names, const std::vector<ChannelRole>& roles,
                       const std::vector<std::vector<double>>& channels, int64_t period = 60) {
    SeriesFrame f;
    f.sample_period = period;
    f.channel_names = names;
    f.roles = roles;
    f.values.resize(channels.size());
    f.missing.resize(channels.size());
    for (size_t t = 0; t < channels[0].size(); ++t)
        f.timestamps.push_back(static_cast<int64_t>(t) * period);
    for (size_t c = 0; c < channels.size(); ++c)
        for (double v : channels[c]) {
            bool miss = std::isnan(v);
            f.values[c].push_back(v);
            f.missing[c].push_back(miss ? 1 : 0);
        }
    return f;
}

WindowView window_at(const SeriesFrame& f, const WindowSpec& spec, int64_t offset) {
    WindowView w;
    w.frame = &f;
    w.offset = offset;
    w.length = spec.length;
    w.time_begin = f.timestamps[static_cast<size_t>(offset)];
    w.time_end = f.timestamps[static_cast<size_t>(offset + spec.length - 1)];
    return w;
}

std::vector<double> noisy(int64_t rows, uint64_t seed, double mean, double amp) {
    Rng rng(seed);
    std::vector<double> v(static_cast<size_t>(rows));
    for (auto& x : v) x = mean + amp * rng.normal();
    return v;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    cfg.patch = 2;
    cfg.prompt_count = 1;
    cfg.anomaly_types = 2;
    cfg.seed = 11;
    return cfg;
}

WindowSpec spec_8_4() {
    WindowSpec spec;
    spec.length = 8;
    spec.past_len = 4;
    spec.future_len = 4;
    spec.stride = 1;
    return spec;
}

}  // namespace

TEST_CASE("model config validation") {
    WindowSpec spec = spec_8_4();
    ModelConfig cfg = tiny_config();

    cfg.embed_dim = 9;
    CHECK_THROWS_WITH_AS(Model(cfg, spec, 1, 0), doctest::Contains("not divisible"),
                         std::invalid_argument);

    cfg = tiny_config();
    cfg.anomaly_type = 5;
    CHECK_THROWS_WITH_AS(Model(cfg, spec, 1, 0), doctest::Contains("anomaly_type"),
                         std::invalid_argument);

    cfg = tiny_config();
    cfg.dropout = 1.0;
    CHECK_THROWS_WITH_AS(Model(cfg, spec, 1, 0), doctest::Contains("dropout"),
                         std::invalid_argument);

    cfg = tiny_config();
    cfg.blocks = 0;
    CHECK_THROWS_WITH_AS(Model(cfg, spec, 1, 0), doctest::Contains("blocks"), std::invalid_argument);

    cfg = tiny_config();
    CHECK_THROWS_WITH_AS(Model(cfg, spec, 0, 1), doctest::Contains("target"), std::invalid_argument);

    cfg = tiny_config();
    cfg.patch = 3;  // does not divide past/future spans
    CHECK_THROWS_WITH_AS(Model(cfg, spec, 1, 0), doctest::Contains("patch size"),
                         std::invalid_argument);
}

TEST_CASE("prediction shape follows the window spec") {
    WindowSpec spec;
    spec.length = 16;
    spec.past_len = 8;
    spec.future_len = 8;

    for (int m : {0, 3}) {
        for (int blocks : {1, 2}) {
            ModelConfig cfg = tiny_config();
            cfg.blocks = blocks;
            cfg.prompt_count = 2;

            std::vector<std::string> names = {"HR", "HRV"};
            std::vector<ChannelRole> roles = {ChannelRole::target, ChannelRole::target};
            std::vector<std::vector<double>> data = {noisy(16, 1, 0.0, 1.0), noisy(16, 2, 0.0, 1.0)};
            for (int c = 0; c < m; ++c) {
                names.push_back("ctx" + std::to_string(c));
                roles.push_back(ChannelRole::context);
                data.push_back(noisy(16, 3 + static_cast<uint64_t>(c), 0.0, 1.0));
            }
            SeriesFrame f = make_frame(names, roles, data);

            Model model(cfg, spec, 2, m);
            ForwardResult res = model.forward_window(window_at(f, spec, 0));
            REQUIRE(res.xhat.rank() == 2);
            CHECK(res.xhat.dim(0) == 8);
            CHECK(res.xhat.dim(1) == 2);
            // assembled stack keeps prompts + full-window tokens for all channels
            CHECK(res.z_out.time_tokens() == 2 + 16 / 2);
            CHECK(res.z_out.channels() == 2 + m);
        }
    }
}

TEST_CASE("full model gradient check") {
    // two blocks, one target plus one context channel, one window
    ModelConfig cfg = tiny_config();
    cfg.blocks = 2;
    WindowSpec spec = spec_8_4();

    std::vector<double> hr = noisy(8, 5, 0.0, 1.0);
    std::vector<double> steps = noisy(8, 6, 0.0, 1.0);
    hr[2] = kNaN;  // past gap
    hr[6] = kNaN;  // future gap, loss must skip it
    SeriesFrame f = make_frame({"HR", "Steps"}, {ChannelRole::target, ChannelRole::context},
                               {hr, steps});

    Model model(cfg, spec, 1, 1);
    WindowView w = window_at(f, spec, 0);
    vigil::testing::grad_check_params(model.tape(), model.params().all(),
                                      [&] { return model.window_loss(w); });
}

TEST_CASE("loss ignores values stored at missing future cells") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();

    std::vector<double> hr = noisy(8, 9, 0.0, 1.0);
    hr[5] = kNaN;
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {hr});
    Model model(cfg, spec, 1, 0);
    const double base = model.window_loss(window_at(f, spec, 0)).item();

    // stored value behind the missing flag must be unread, not just damped
    f.values[0][5] = 1e6;
    CHECK(model.window_loss(window_at(f, spec, 0)).item() == base);
    f.values[0][5] = -4.25;
    CHECK(model.window_loss(window_at(f, spec, 0)).item() == base);
}

TEST_CASE("window loss rejects an all-missing future") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    std::vector<double> hr = noisy(8, 10, 0.0, 1.0);
    hr[4] = hr[5] = hr[6] = hr[7] = kNaN;
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {hr});
    Model model(cfg, spec, 1, 0);
    CHECK_THROWS_WITH_AS(model.window_loss(window_at(f, spec, 0)),
                         doctest::Contains("every future cell is missing"), std::invalid_argument);
}

TEST_CASE("attention rows are normalized") {
    ModelConfig cfg = tiny_config();
    cfg.blocks = 2;
    WindowSpec spec = spec_8_4();
    SeriesFrame f = make_frame({"HR", "Steps"}, {ChannelRole::target, ChannelRole::context},
                               {noisy(8, 12, 0.0, 1.0), noisy(8, 13, 0.0, 1.0)});
    Model model(cfg, spec, 1, 1);

    ForwardTrace trace;
    model.forward_window(window_at(f, spec, 0), &trace);
    // two attention branches per block
    REQUIRE(trace.attention_rows.size() == 4);
    for (const Tensor& att : trace.attention_rows) {
        REQUIRE(att.rank() == 3);
        const auto v = att.value();
        const int64_t rows = att.dim(0) * att.dim(1);
        const int64_t width = att.dim(2);
        for (int64_t r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (int64_t c = 0; c < width; ++c) sum += v[static_cast<size_t>(r * width + c)];
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("context channel order does not matter without channel identity") {
    ModelConfig cfg = tiny_config();
    cfg.channel_identity = false;
    WindowSpec spec = spec_8_4();

    std::vector<double> hr = noisy(8, 21, 0.0, 1.0);
    std::vector<double> c1 = noisy(8, 22, 0.0, 1.0);
    std::vector<double> c2 = noisy(8, 23, 0.0, 1.0);
    SeriesFrame a = make_frame({"HR", "c1", "c2"},
                               {ChannelRole::target, ChannelRole::context, ChannelRole::context},
                               {hr, c1, c2});
    SeriesFrame b = make_frame({"HR", "c2", "c1"},
                               {ChannelRole::target, ChannelRole::context, ChannelRole::context},
                               {hr, c2, c1});

    Model model(cfg, spec, 1, 2);
    const auto xa = model.forward_window(window_at(a, spec, 0)).xhat;
    std::vector<double> va(xa.value().begin(), xa.value().end());
    const auto xb = model.forward_window(window_at(b, spec, 0)).xhat;
    for (size_t i = 0; i < va.size(); ++i) CHECK(std::abs(va[i] - xb.value()[i]) < 1e-9);
}

TEST_CASE("standardizer") {
    SeriesFrame f = make_frame({"HR", "flat"}, {ChannelRole::target, ChannelRole::context},
                               {{10.0, 12.0, kNaN, 14.0}, {3.0, 3.0, 3.0, 3.0}});
    Standardizer s = Standardizer::fit({&f});

    SUBCASE("round trip returns original units") {
        SeriesFrame z = s.apply(f);
        for (int c = 0; c < f.channel_count(); ++c)
            for (int64_t t = 0; t < f.rows(); ++t) {
                if (f.missing[static_cast<size_t>(c)][static_cast<size_t>(t)]) continue;
                double back = s.destandardize(c, z.values[static_cast<size_t>(c)][static_cast<size_t>(t)]);
                CHECK(rel_err(back, f.values[static_cast<size_t>(c)][static_cast<size_t>(t)]) < 1e-12);
            }
    }

    SUBCASE("observed moments") {
        CHECK(s.mean[0] == doctest::Approx(12.0));
        CHECK(s.stdev[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
    }

    SUBCASE("degenerate channel keeps std 1") {
        CHECK(s.mean[1] == doctest::Approx(3.0));
        CHECK(s.stdev[1] == doctest::Approx(1.0));
        SeriesFrame z = s.apply(f);
        CHECK(z.values[1][0] == doctest::Approx(0.0));
    }

    SUBCASE("mismatched channels are rejected") {
        SeriesFrame other = make_frame({"X"}, {ChannelRole::target}, {{1.0, 2.0}});
        CHECK_THROWS_WITH_AS(s.apply(other), doctest::Contains("do not match"),
                             std::invalid_argument);
    }

    SUBCASE("missing cells pass through untouched") {
        SeriesFrame z = s.apply(f);
        CHECK(z.missing[0][2] == 1);
    }
}

TEST_CASE("reconstruction loss values") {
    Tape tape;

    SUBCASE("exact match scores zero") {
        Tensor xhat = tape.watch({2, 2}, {1.0, 2.0, 3.0, 4.0});
        Tensor loss = reconstruction_loss(xhat, {1.0, 2.0, 3.0, 4.0}, {0, 0, 0, 0});
        CHECK(loss.item() == doctest::Approx(0.0));
    }

    SUBCASE("single observed error averages over observed count") {
        Tensor xhat = tape.watch({2, 2}, {1.0, 2.0, 3.0, 4.0});
        // truth differs by 3 at one cell, one other cell missing
        Tensor loss = reconstruction_loss(xhat, {4.0, 2.0, 0.0, 4.0}, {0, 0, 1, 0});
        CHECK(loss.item() == doctest::Approx(9.0 / 3.0));
    }

    SUBCASE("all missing throws") {
        Tensor xhat = tape.watch({1, 2}, {1.0, 2.0});
        CHECK_THROWS_WITH_AS(reconstruction_loss(xhat, {0.0, 0.0}, {1, 1}),
                             doctest::Contains("every future cell is missing"),
                             std::invalid_argument);
    }

    SUBCASE("length mismatch throws") {
        Tensor xhat = tape.watch({1, 2}, {1.0, 2.0});
        CHECK_THROWS_WITH_AS(reconstruction_loss(xhat, {0.0}, {0}),
                             doctest::Contains("shape mismatch"), std::invalid_argument);
    }
}

TEST_CASE("training fits a constant series") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target},
                               {std::vector<double>(24, 70.0)});

    Model model(cfg, spec, 1, 0);
    TrainResult r = model.train({&f}, 10, 0.02);
    REQUIRE(r.epoch_loss.size() == 10);
    CHECK(r.windows_used == 17 * 10);
    CHECK(r.windows_skipped == 0);
    CHECK(model.trained());
    CHECK(r.epoch_loss.back() < 1e-4);

    SUBCASE("imputation lands on the constant level") {
        auto pred = model.impute(f, 0);
        REQUIRE(pred.size() == 4);
        REQUIRE(pred[0].size() == 1);
        for (const auto& row : pred) CHECK(std::abs(row[0] - 70.0) < 0.5);
    }
}

TEST_CASE("training loss trends down on a clean sine") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    std::vector<double> hr(64);
    for (size_t t = 0; t < hr.size(); ++t)
        hr[t] = 70.0 + 10.0 * std::sin(2.0 * M_PI * static_cast<double>(t) / 16.0);
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {hr});

    Model model(cfg, spec, 1, 0);
    TrainResult r = model.train({&f}, 8, 0.01);
    REQUIRE(r.epoch_loss.size() == 8);
    for (size_t e = 1; e < r.epoch_loss.size(); ++e)
        CHECK(r.epoch_loss[e] <= r.epoch_loss[e - 1] * 1.05);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("windows with an entirely missing future are skipped") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    std::vector<double> hr = noisy(12, 31, 70.0, 2.0);
    // rows 8..11 all missing: exactly the future span of the offset-4 window
    hr[8] = hr[9] = hr[10] = hr[11] = kNaN;
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {hr});

    Model model(cfg, spec, 1, 0);
    TrainResult r = model.train({&f}, 2, 0.01);
    // 5 window offsets, one of them future-blind, two epochs
    CHECK(r.windows_used == 4 * 2);
    CHECK(r.windows_skipped == 1 * 2);
}

TEST_CASE("same seed reproduces training bit for bit") {
    WindowSpec spec = spec_8_4();
    std::vector<double> hr = noisy(32, 41, 70.0, 5.0);
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {hr});

    auto run = [&](uint64_t seed) {
        ModelConfig cfg = tiny_config();
        cfg.seed = seed;
        auto model = std::make_unique<Model>(cfg, spec, 1, 0);
        TrainResult r = model->train({&f}, 3, 0.01);
        return std::make_pair(std::move(model), r);
    };

    auto [m1, r1] = run(7);
    auto [m2, r2] = run(7);
    CHECK(r1.epoch_loss == r2.epoch_loss);
    auto p1 = m1->params().all();
    auto p2 = m2->params().all();
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) {
        REQUIRE(p1[i].size() == p2[i].size());
        for (int64_t j = 0; j < p1[i].size(); ++j)
            CHECK(p1[i].value()[static_cast<size_t>(j)] == p2[i].value()[static_cast<size_t>(j)]);
    }

    auto [m3, r3] = run(8);
    CHECK(r1.epoch_loss != r3.epoch_loss);
}

TEST_CASE("future context drives the prediction") {
    // target copies a binary context flag; pasts are identical across probes,
    // so any separation must come from future context tokens
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();

    const int64_t rows = 160;
    std::vector<double> hr(static_cast<size_t>(rows)), flag(static_cast<size_t>(rows));
    for (int64_t t = 0; t < rows; ++t) {
        double g = static_cast<double>((t / 8) % 2);
        flag[static_cast<size_t>(t)] = g;
        hr[static_cast<size_t>(t)] = 70.0 + 30.0 * g;
    }
    SeriesFrame f = make_frame({"HR", "flag"}, {ChannelRole::target, ChannelRole::context},
                               {hr, flag});

    Model model(cfg, spec, 1, 1);
    model.train({&f}, 20, 0.02);

    auto probe = [&](double future_flag) {
        std::vector<double> ph(8, 70.0);
        std::vector<double> pf(8, 0.0);
        for (size_t t = 4; t < 8; ++t) {
            pf[t] = future_flag;
            ph[t] = 70.0 + 30.0 * future_flag;  // masked before the model sees it
        }
        SeriesFrame p = make_frame({"HR", "flag"}, {ChannelRole::target, ChannelRole::context},
                                   {ph, pf});
        auto pred = model.impute(p, 0);
        double mean = 0.0;
        for (const auto& row : pred) mean += row[0];
        return mean / static_cast<double>(pred.size());
    };

    const double low = probe(0.0);
    const double high = probe(1.0);
    CHECK(high - low > 15.0);
    CHECK(std::abs(low - 70.0) < 10.0);
    CHECK(std::abs(high - 100.0) < 10.0);
}

TEST_CASE("forward rejects a frame with the wrong channel split") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {noisy(8, 51, 0.0, 1.0)});
    Model model(cfg, spec, 1, 2);
    CHECK_THROWS_WITH_AS(model.forward_window(window_at(f, spec, 0)),
                         doctest::Contains("model expects"), std::invalid_argument);
}

TEST_CASE("impute requires a fitted scaler and a window inside the series") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target},
                               {std::vector<double>(24, 70.0)});
    Model model(cfg, spec, 1, 0);
    CHECK_THROWS_WITH_AS(model.impute(f, 0), doctest::Contains("not fitted"), std::logic_error);

    model.train({&f}, 1, 0.01);
    CHECK_THROWS_WITH_AS(model.impute(f, 20), doctest::Contains("outside series"),
                         std::invalid_argument);
}

TEST_CASE("prompt selection changes the forward pass") {
    ModelConfig cfg = tiny_config();
    WindowSpec spec = spec_8_4();
    SeriesFrame f = make_frame({"HR"}, {ChannelRole::target}, {noisy(8, 61, 0.0, 1.0)});
    Model model(cfg, spec, 1, 0);

    const auto x0 = model.forward_window(window_at(f, spec, 0)).xhat;
    std::vector<double> v0(x0.value().begin(), x0.value().end());
    model.set_anomaly_type(1);
    const auto x1 = model.forward_window(window_at(f, spec, 0)).xhat;
    double diff = 0.0;
    for (size_t i = 0; i < v0.size(); ++i) diff += std::abs(v0[i] - x1.value()[i]);
    CHECK(diff > 1e-8);

    CHECK_THROWS_WITH_AS(model.set_anomaly_type(2), doctest::Contains("anomaly_type"),
                         std::invalid_argument);
}
