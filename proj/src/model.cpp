#include "vigil/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vigil {

void ModelConfig::validate() const {
    if (blocks < 1) throw std::invalid_argument("model: blocks must be >= 1");
    if (heads < 1) throw std::invalid_argument("model: heads must be >= 1");
    if (embed_dim % heads != 0)
        throw std::invalid_argument("model: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    if (anomaly_types < 1) throw std::invalid_argument("model: anomaly_types must be >= 1");
    if (anomaly_type < 0 || anomaly_type >= anomaly_types)
        throw std::invalid_argument("model: anomaly_type " + std::to_string(anomaly_type) +
                                    " outside [0, " + std::to_string(anomaly_types) + ")");
    if (dylinear_base < 1) throw std::invalid_argument("model: dylinear_base must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("model: dropout must be in [0, 1)");
}

TokenizerConfig ModelConfig::tokenizer() const {
    TokenizerConfig t;
    t.patch = patch;
    t.embed_dim = embed_dim;
    t.prompt_count = prompt_count;
    t.anomaly_type = anomaly_type;
    t.channel_identity = channel_identity;
    t.mask_context_future = mask_context_future;
    return t;
}

// ---- parameters ----------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed.target_patch", embed.target_patch);
    out.emplace_back("embed.context_patch", embed.context_patch);
    out.emplace_back("embed.channel_id", embed.channel_id);
    out.emplace_back("embed.pos_gain", embed.pos_gain);
    out.emplace_back("embed.gen_token", embed.gen_token);
    out.emplace_back("embed.prompt_bank", embed.prompt_bank);
    for (size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const std::string pre = "block" + std::to_string(i) + ".";
        out.emplace_back(pre + "ln1.scale", b.ln1_scale);
        out.emplace_back(pre + "ln1.shift", b.ln1_shift);
        const std::pair<std::string, const AttnParams*> attns[] = {{"time_attn.", &b.time_attn},
                                                                   {"var_attn.", &b.var_attn}};
        for (const auto& [aname, a] : attns) {
            out.emplace_back(pre + aname + "wq", a->wq);
            out.emplace_back(pre + aname + "bq", a->bq);
            out.emplace_back(pre + aname + "wk", a->wk);
            out.emplace_back(pre + aname + "bk", a->bk);
            out.emplace_back(pre + aname + "wv", a->wv);
            out.emplace_back(pre + aname + "bv", a->bv);
            out.emplace_back(pre + aname + "wo", a->wo);
            out.emplace_back(pre + aname + "bo", a->bo);
            if (a == &b.time_attn) {
                out.emplace_back(pre + "gate_time", b.gate_time);
                out.emplace_back(pre + "ln2.scale", b.ln2_scale);
                out.emplace_back(pre + "ln2.shift", b.ln2_shift);
            }
        }
        out.emplace_back(pre + "gate_var", b.gate_var);
        out.emplace_back(pre + "ln3.scale", b.ln3_scale);
        out.emplace_back(pre + "ln3.shift", b.ln3_shift);
        out.emplace_back(pre + "ffn.w1", b.ffn_w1);
        out.emplace_back(pre + "ffn.b1", b.ffn_b1);
        out.emplace_back(pre + "ffn.w2", b.ffn_w2);
        out.emplace_back(pre + "ffn.b2", b.ffn_b2);
        out.emplace_back(pre + "ffn.dyw", b.ffn_dyw);
        out.emplace_back(pre + "gate_ffn", b.gate_ffn);
    }
    out.emplace_back("tower.mlp_w1", tower.mlp_w1);
    out.emplace_back("tower.mlp_b1", tower.mlp_b1);
    out.emplace_back("tower.mlp_w2", tower.mlp_w2);
    out.emplace_back("tower.mlp_b2", tower.mlp_b2);
    out.emplace_back("tower.dyw", tower.dyw);
    out.emplace_back("tower.proj_w", tower.proj_w);
    out.emplace_back("tower.proj_b", tower.proj_b);
    return out;
}

std::vector<Tensor> ModelParams::all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

namespace {

Tensor xavier(Tape& tape, Rng& rng, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(static_cast<size_t>(fan_in) * static_cast<size_t>(fan_out));
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return tape.parameter({fan_in, fan_out}, std::move(v));
}

Tensor small_uniform(Tape& tape, Rng& rng, Shape shape) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(-0.1, 0.1);
    return tape.parameter(std::move(shape), std::move(v));
}

Tensor zeros_param(Tape& tape, Shape shape) {
    return tape.parameter(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
}

Tensor ones_param(Tape& tape, Shape shape) {
    return tape.parameter(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 1.0));
}

AttnParams init_attn(Tape& tape, Rng& rng, int d) {
    AttnParams a;
    a.wq = xavier(tape, rng, d, d);
    a.bq = zeros_param(tape, {d});
    a.wk = xavier(tape, rng, d, d);
    a.bk = zeros_param(tape, {d});
    a.wv = xavier(tape, rng, d, d);
    a.bv = zeros_param(tape, {d});
    a.wo = xavier(tape, rng, d, d);
    a.bo = zeros_param(tape, {d});
    return a;
}

ModelParams init_params(Tape& tape, const ModelConfig& cfg, int n, int m) {
    Rng rng(cfg.seed);
    const int d = static_cast<int>(cfg.embed_dim);
    const int k = static_cast<int>(cfg.patch);
    const int h = static_cast<int>(cfg.ffn_hidden > 0 ? cfg.ffn_hidden : 2 * cfg.embed_dim);
    const int gate_len = cfg.per_feature_gates ? d : 1;
    const int base = static_cast<int>(cfg.dylinear_base);

    ModelParams p;
    p.embed.target_patch = xavier(tape, rng, k, d);
    p.embed.context_patch = xavier(tape, rng, k, d);
    p.embed.channel_id = small_uniform(tape, rng, {n + m, d});
    p.embed.pos_gain = ones_param(tape, {1});
    p.embed.gen_token = small_uniform(tape, rng, {d});
    p.embed.prompt_bank =
        small_uniform(tape, rng, {cfg.anomaly_types * static_cast<int>(cfg.prompt_count), d});

    for (int i = 0; i < cfg.blocks; ++i) {
        BlockParams b;
        b.ln1_scale = ones_param(tape, {d});
        b.ln1_shift = zeros_param(tape, {d});
        b.time_attn = init_attn(tape, rng, d);
        b.gate_time = zeros_param(tape, {gate_len});  // sigmoid(0) = 0.5
        b.ln2_scale = ones_param(tape, {d});
        b.ln2_shift = zeros_param(tape, {d});
        b.var_attn = init_attn(tape, rng, d);
        b.gate_var = zeros_param(tape, {gate_len});
        b.ln3_scale = ones_param(tape, {d});
        b.ln3_shift = zeros_param(tape, {d});
        b.ffn_w1 = xavier(tape, rng, d, h);
        b.ffn_b1 = zeros_param(tape, {h});
        b.ffn_w2 = xavier(tape, rng, h, d);
        b.ffn_b2 = zeros_param(tape, {d});
        b.ffn_dyw = ones_param(tape, {base});
        b.gate_ffn = zeros_param(tape, {gate_len});
        p.blocks.push_back(std::move(b));
    }

    p.tower.mlp_w1 = xavier(tape, rng, d, h);
    p.tower.mlp_b1 = zeros_param(tape, {h});
    p.tower.mlp_w2 = xavier(tape, rng, h, d);
    p.tower.mlp_b2 = zeros_param(tape, {d});
    p.tower.dyw = ones_param(tape, {base});
    p.tower.proj_w = xavier(tape, rng, d, k);
    p.tower.proj_b = zeros_param(tape, {k});
    return p;
}

// LayerNorm over the embedding axis with a learned affine pair.
Tensor ln_affine(const Tensor& x, const Tensor& scale, const Tensor& shift) {
    return add(mul(layer_norm(x, x.rank() - 1), scale), shift);
}

// Elementwise scale along the leading (token-time) axis of a [T, A, B]
// tensor by a weight vector interpolated to length T.
Tensor modulate_time_axis(const Tensor& x, const Tensor& w_base) {
    Tensor wt = linear_interp_resize(w_base, 0, x.dim(0));
    return transpose(mul(transpose(x, {1, 2, 0}), wt), {2, 0, 1});
}

}  // namespace

// ---- standardization -----------------------------------------------------

Standardizer Standardizer::fit(const std::vector<const SeriesFrame*>& frames) {
    if (frames.empty()) throw std::invalid_argument("standardizer: no frames");
    const SeriesFrame& first = *frames.front();
    Standardizer s;
    s.channel_names = first.channel_names;
    const int C = first.channel_count();
    s.mean.assign(static_cast<size_t>(C), 0.0);
    s.stdev.assign(static_cast<size_t>(C), 1.0);
    for (int c = 0; c < C; ++c) {
        double sum = 0.0;
        int64_t count = 0;
        for (const SeriesFrame* f : frames) {
            if (f->channel_names != s.channel_names)
                throw std::invalid_argument("standardizer: frames have mismatched channels");
            for (int64_t t = 0; t < f->rows(); ++t)
                if (!f->missing[static_cast<size_t>(c)][static_cast<size_t>(t)]) {
                    sum += f->values[static_cast<size_t>(c)][static_cast<size_t>(t)];
                    ++count;
                }
        }
        if (count == 0) continue;  // mean 0, std 1
        const double mean = sum / static_cast<double>(count);
        double var = 0.0;
        for (const SeriesFrame* f : frames)
            for (int64_t t = 0; t < f->rows(); ++t)
                if (!f->missing[static_cast<size_t>(c)][static_cast<size_t>(t)]) {
                    const double dd = f->values[static_cast<size_t>(c)][static_cast<size_t>(t)] - mean;
                    var += dd * dd;
                }
        var /= static_cast<double>(count);
        s.mean[static_cast<size_t>(c)] = mean;
        const double sd = std::sqrt(var);
        s.stdev[static_cast<size_t>(c)] = sd < 1e-12 ? 1.0 : sd;
    }
    return s;
}

SeriesFrame Standardizer::apply(const SeriesFrame& frame) const {
    if (frame.channel_names != channel_names)
        throw std::invalid_argument("standardizer: frame channels do not match the fitted scaler");
    SeriesFrame out = frame;
    for (int c = 0; c < frame.channel_count(); ++c)
        for (int64_t t = 0; t < frame.rows(); ++t)
            if (!out.missing[static_cast<size_t>(c)][static_cast<size_t>(t)])
                out.values[static_cast<size_t>(c)][static_cast<size_t>(t)] =
                    (out.values[static_cast<size_t>(c)][static_cast<size_t>(t)] -
                     mean[static_cast<size_t>(c)]) /
                    stdev[static_cast<size_t>(c)];
    return out;
}

double Standardizer::destandardize(int channel, double v) const {
    return v * stdev[static_cast<size_t>(channel)] + mean[static_cast<size_t>(channel)];
}

// ---- loss ------------------------------------------------------------------

Tensor reconstruction_loss(const Tensor& xhat, const std::vector<double>& truth,
                           const std::vector<uint8_t>& miss) {
    if (static_cast<size_t>(xhat.size()) != truth.size() || truth.size() != miss.size())
        throw std::invalid_argument("reconstruction_loss: shape mismatch");
    int64_t observed = 0;
    std::vector<double> mask(truth.size(), 0.0);
    std::vector<double> target(truth.size(), 0.0);
    for (size_t i = 0; i < truth.size(); ++i) {
        if (miss[i]) continue;  // masked-missing cells never touch the loss
        mask[i] = 1.0;
        target[i] = truth[i];
        ++observed;
    }
    if (observed == 0)
        throw std::invalid_argument("reconstruction_loss: every future cell is missing");
    Tensor diff = mul(sub(xhat, Tensor::constant(xhat.shape(), std::move(target))),
                      Tensor::constant(xhat.shape(), std::move(mask)));
    return scale(reduce_sum(mul(diff, diff)), 1.0 / static_cast<double>(observed));
}

// ---- model -----------------------------------------------------------------

Model::Model(const ModelConfig& cfg, const WindowSpec& spec, int n_targets, int m_contexts)
    : cfg_(cfg), spec_(spec), n_(n_targets), m_(m_contexts), tape_(std::make_unique<Tape>()),
      drop_rng_(cfg.seed ^ 0x5eed5eedULL) {
    cfg_.validate();
    spec_.validate();
    cfg_.tokenizer().validate(spec_);
    if (n_ < 1) throw std::invalid_argument("model: need at least one target channel");
    if (m_ < 0) throw std::invalid_argument("model: negative context channel count");
    params_ = init_params(*tape_, cfg_, n_, m_);
}

void Model::set_anomaly_type(int type) {
    if (type < 0 || type >= cfg_.anomaly_types)
        throw std::invalid_argument("model: anomaly_type " + std::to_string(type) + " outside [0, " +
                                    std::to_string(cfg_.anomaly_types) + ")");
    cfg_.anomaly_type = type;
}

SeriesFrame Model::standardize(const SeriesFrame& frame) const {
    if (scaler_.channel_names.empty())
        throw std::logic_error("model: standardizer not fitted (train first or load a checkpoint)");
    return scaler_.apply(frame);
}

Tensor Model::maybe_dropout(Tensor x) {
    if (!training_mode_ || cfg_.dropout <= 0.0) return x;
    const double keep = 1.0 - cfg_.dropout;
    std::vector<double> mask(static_cast<size_t>(x.size()));
    for (auto& v : mask) v = drop_rng_.uniform() < keep ? 1.0 / keep : 0.0;
    return mul(x, Tensor::constant(x.shape(), std::move(mask)));
}

Tensor Model::run_blocks(Tensor z, int64_t time_tokens, ForwardTrace* trace) {
    (void)time_tokens;
    for (const BlockParams& b : params_.blocks) {
        // time-axis attention, batched over channels
        Tensor tz = transpose(z, {1, 0, 2});
        Tensor tn = ln_affine(tz, b.ln1_scale, b.ln1_shift);
        Tensor tb = mhsa(tn, b.time_attn, trace);
        tb = mul(maybe_dropout(tb), sigmoid(b.gate_time));
        z = add(z, transpose(tb, {1, 0, 2}));

        // variable-axis attention, batched over time tokens
        Tensor vn = ln_affine(z, b.ln2_scale, b.ln2_shift);
        Tensor vb = mhsa(vn, b.var_attn, trace);
        vb = mul(maybe_dropout(vb), sigmoid(b.gate_var));
        z = add(z, vb);

        // dynamic FFN: hidden modulated along the token-time axis
        Tensor fn = ln_affine(z, b.ln3_scale, b.ln3_shift);
        Tensor h = gelu(add(matmul(fn, b.ffn_w1), b.ffn_b1));
        Tensor hm = maybe_dropout(modulate_time_axis(h, b.ffn_dyw));
        Tensor fb = add(matmul(hm, b.ffn_w2), b.ffn_b2);
        fb = mul(fb, sigmoid(b.gate_ffn));
        z = add(z, fb);
    }
    return z;
}

Tensor Model::mhsa(const Tensor& x, const AttnParams& p, ForwardTrace* trace) {
    const int B = x.dim(0), T = x.dim(1), d = x.dim(2);
    const int heads = cfg_.heads;
    const int dh = d / heads;
    Tensor q = add(matmul(x, p.wq), p.bq);
    Tensor k = add(matmul(x, p.wk), p.bk);
    Tensor v = add(matmul(x, p.wv), p.bv);
    auto split = [&](const Tensor& t) {
        return reshape(transpose(reshape(t, {B, T, heads, dh}), {0, 2, 1, 3}), {B * heads, T, dh});
    };
    Tensor att = softmax(
        scale(matmul(split(q), transpose(split(k), {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh))),
        2);
    if (trace) trace->attention_rows.push_back(att);
    Tensor out = matmul(att, split(v));
    out = reshape(transpose(reshape(out, {B, heads, T, dh}), {0, 2, 1, 3}), {B, T, d});
    return add(matmul(out, p.wo), p.bo);
}

ForwardResult Model::forward_window(const WindowView& window, ForwardTrace* trace) {
    tape_->reset();
    const auto targets = window.frame->target_channels();
    const auto contexts = window.frame->context_channels();
    if (static_cast<int>(targets.size()) != n_ || static_cast<int>(contexts.size()) != m_)
        throw std::invalid_argument("model: window has " + std::to_string(targets.size()) + "t/" +
                                    std::to_string(contexts.size()) + "c channels, model expects " +
                                    std::to_string(n_) + "t/" + std::to_string(m_) + "c");

    const TokenizerConfig tok = cfg_.tokenizer();
    TokenParts parts = embed_patches(window, spec_, tok, params_.embed);
    TokenTensor zp = mask_future(parts.past, params_.embed.gen_token, cfg_.mask_context_future);
    TokenTensor zf = mask_future(parts.future, params_.embed.gen_token, cfg_.mask_context_future);
    TokenTensor zc = parts.ctx.data.defined()
                         ? mask_future(parts.ctx, params_.embed.gen_token, cfg_.mask_context_future)
                         : parts.ctx;
    TokenTensor z = assemble(zp, zf, zc, params_.embed.prompt_bank, tok);

    ForwardResult res;
    res.z_out = z;
    res.z_out.data = run_blocks(z.data, z.time_tokens(), trace);
    res.xhat = tower_head(res.z_out.data, spec_.future_len / cfg_.patch);
    return res;
}

Tensor Model::tower_head(const Tensor& z_out, int64_t future_tokens) {
    const int64_t past_tokens = spec_.past_len / cfg_.patch;
    const int64_t prompt = cfg_.prompt_count;
    Tensor zf = slice(z_out, 0, static_cast<int>(prompt + past_tokens), static_cast<int>(future_tokens));
    zf = slice(zf, 1, 0, n_);  // target columns only
    Tensor s = add(zf, modulate_time_axis(zf, params_.tower.dyw));
    Tensor h = gelu(add(matmul(s, params_.tower.mlp_w1), params_.tower.mlp_b1));
    Tensor mo = add(matmul(h, params_.tower.mlp_w2), params_.tower.mlp_b2);
    Tensor pr = add(matmul(mo, params_.tower.proj_w), params_.tower.proj_b);  // [F, n, k]
    // unfold patches back to samples: [F, n, k] -> [F, k, n] -> [lambda, n]
    return reshape(transpose(pr, {0, 2, 1}), {static_cast<int>(spec_.future_len), n_});
}

Tensor Model::window_loss(const WindowView& window) {
    ForwardResult res = forward_window(window);
    const auto targets = window.frame->target_channels();
    const int64_t lambda = spec_.future_len;
    std::vector<double> truth(static_cast<size_t>(lambda * n_), 0.0);
    std::vector<uint8_t> miss(static_cast<size_t>(lambda * n_), 1);
    for (int64_t t = 0; t < lambda; ++t) {
        const size_t row = static_cast<size_t>(window.offset + spec_.past_len + t);
        for (int c = 0; c < n_; ++c) {
            const size_t ch = static_cast<size_t>(targets[static_cast<size_t>(c)]);
            if (window.frame->missing[ch][row]) continue;
            truth[static_cast<size_t>(t * n_ + c)] = window.frame->values[ch][row];
            miss[static_cast<size_t>(t * n_ + c)] = 0;
        }
    }
    return reconstruction_loss(res.xhat, truth, miss);
}

namespace {

bool future_all_missing(const WindowView& w, const WindowSpec& spec, const std::vector<int>& targets) {
    for (int64_t t = spec.past_len; t < spec.length; ++t)
        for (int c : targets)
            if (!w.frame->missing[static_cast<size_t>(c)][static_cast<size_t>(w.offset + t)]) return false;
    return true;
}

}  // namespace

TrainResult Model::train(const std::vector<const SeriesFrame*>& frames, int epochs, double lr,
                         double lr_decay) {
    if (frames.empty()) throw std::invalid_argument("model: train called with no frames");
    if (epochs < 1) throw std::invalid_argument("model: epochs must be >= 1");

    scaler_ = Standardizer::fit(frames);
    std::vector<SeriesFrame> standardized;
    standardized.reserve(frames.size());
    for (const SeriesFrame* f : frames) standardized.push_back(scaler_.apply(*f));

    std::vector<WindowView> windows;
    for (const SeriesFrame& f : standardized)
        for (const WindowView& w : sliding_windows(f, spec_)) windows.push_back(w);
    if (windows.empty())
        throw std::invalid_argument("model: no training windows (series shorter than the window)");

    const auto targets = standardized.front().target_channels();
    Rng order_rng(cfg_.seed);
    AdamConfig acfg;
    acfg.lr = lr;
    AdamState opt_state;
    auto opt_params = params_.all();

    TrainResult result;
    loss_trace_.clear();
    training_mode_ = true;
    drop_rng_ = Rng(cfg_.seed ^ 0x5eed5eedULL);
    std::vector<size_t> order(windows.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr_e = decayed_lr(lr, lr_decay, epoch);
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        int64_t used = 0;
        for (size_t idx : order) {
            const WindowView& w = windows[idx];
            if (future_all_missing(w, spec_, targets)) {
                ++result.windows_skipped;
                continue;
            }
            Tensor loss = window_loss(w);
            const double lv = loss.item();
            if (!std::isfinite(lv)) {
                training_mode_ = false;
                throw std::runtime_error("model: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", window offset " + std::to_string(w.offset));
            }
            for (auto& p : opt_params) p.zero_grad();
            tape_->backward(loss);
            adam_step(opt_params, opt_state, acfg, lr_e);
            loss_sum += lv;
            ++used;
        }
        result.windows_used += used;
        loss_trace_.push_back(used > 0 ? loss_sum / static_cast<double>(used) : 0.0);
    }
    training_mode_ = false;
    tape_->reset();
    result.epoch_loss = loss_trace_;
    trained_ = true;
    return result;
}

std::vector<std::vector<double>> Model::impute(const SeriesFrame& raw_frame, int64_t offset) {
    SeriesFrame sf = standardize(raw_frame);
    if (offset < 0 || offset + spec_.length > sf.rows())
        throw std::invalid_argument("model: impute window [" + std::to_string(offset) + ", " +
                                    std::to_string(offset + spec_.length) + ") outside series");
    WindowView w;
    w.frame = &sf;
    w.offset = offset;
    w.length = spec_.length;
    w.time_begin = sf.timestamps[static_cast<size_t>(offset)];
    w.time_end = sf.timestamps[static_cast<size_t>(offset + spec_.length - 1)];
    ForwardResult res = forward_window(w);

    const auto targets = sf.target_channels();
    std::vector<std::vector<double>> out(static_cast<size_t>(spec_.future_len),
                                         std::vector<double>(static_cast<size_t>(n_), 0.0));
    const auto vals = res.xhat.value();
    for (int64_t t = 0; t < spec_.future_len; ++t)
        for (int c = 0; c < n_; ++c)
            out[static_cast<size_t>(t)][static_cast<size_t>(c)] = scaler_.destandardize(
                targets[static_cast<size_t>(c)], vals[static_cast<size_t>(t * n_ + c)]);
    tape_->reset();
    return out;
}

}  // namespace vigil
