#include "vigil/tokenizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vigil {

void TokenizerConfig::validate(const WindowSpec& spec) const {
    spec.validate();
    if (patch < 1) throw std::invalid_argument("tokenizer: patch size k must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("tokenizer: embed_dim must be >= 1");
    if (prompt_count < 1) throw std::invalid_argument("tokenizer: prompt_count must be >= 1");
    if (anomaly_type < 0) throw std::invalid_argument("tokenizer: anomaly_type must be >= 0");
    auto divides = [&](int64_t len) { return len % patch == 0 && len / patch >= 1; };
    if (!divides(spec.future_len) || !divides(spec.past_len))
        throw std::invalid_argument(
            "tokenizer: patch size k=" + std::to_string(patch) + " must divide past and future "
            "spans with at least one token each (K=" + std::to_string(spec.length) +
            ", lambda=" + std::to_string(spec.future_len) + ")");
}

namespace {

// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
std::vector<double> posenc_row(int64_t pos, int64_t d) {
    std::vector<double> row(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i) {
        double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        double angle = static_cast<double>(pos) * freq;
        row[static_cast<size_t>(i)] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return row;
}

// One channel's token block [tokens x 1 x d] from `tokens` patches of k
// samples starting at window-relative sample `first_sample`.
Tensor embed_channel(const WindowView& win, int channel, int64_t first_sample, int64_t tokens,
                     const TokenizerConfig& cfg, const Tensor& patch_map, const Tensor& channel_id_row,
                     const Tensor& scaled_posenc, std::vector<uint8_t>* all_missing_out) {
    const int64_t k = cfg.patch;
    const auto& values = win.frame->values[static_cast<size_t>(channel)];
    const auto& missing = win.frame->missing[static_cast<size_t>(channel)];

    std::vector<double> patches(static_cast<size_t>(tokens * k), 0.0);
    all_missing_out->assign(static_cast<size_t>(tokens), 1);
    for (int64_t t = 0; t < tokens; ++t) {
        for (int64_t j = 0; j < k; ++j) {
            const size_t row = static_cast<size_t>(win.offset + first_sample + t * k + j);
            if (missing[row]) continue;  // zero-filled pre-embedding
            patches[static_cast<size_t>(t * k + j)] = values[row];
            (*all_missing_out)[static_cast<size_t>(t)] = 0;
        }
    }

    Tensor x = Tensor::constant({static_cast<int>(tokens), static_cast<int>(k)}, std::move(patches));
    Tensor emb = matmul(x, patch_map);  // [tokens, d]
    if (cfg.channel_identity) emb = add(emb, channel_id_row);
    emb = add(emb, scaled_posenc);
    return reshape(emb, {static_cast<int>(tokens), 1, static_cast<int>(cfg.embed_dim)});
}

// Sinusoidal encoding for token positions [first_pos, first_pos+tokens),
// scaled by the learned gain; shape [tokens, d] for suffix-free addition.
Tensor make_scaled_posenc(int64_t first_pos, int64_t tokens, const TokenizerConfig& cfg,
                          const Tensor& pos_gain) {
    std::vector<double> pe;
    pe.reserve(static_cast<size_t>(tokens * cfg.embed_dim));
    for (int64_t t = 0; t < tokens; ++t) {
        auto row = posenc_row(first_pos + t, cfg.embed_dim);
        pe.insert(pe.end(), row.begin(), row.end());
    }
    Tensor base = Tensor::constant({static_cast<int>(tokens), static_cast<int>(cfg.embed_dim)},
                                   std::move(pe));
    return mul(base, pos_gain);
}

TokenMeta sample_meta(TokenKind kind, int64_t first_sample, int64_t token, int64_t k) {
    TokenMeta m;
    m.kind = kind;
    m.sample_begin = first_sample + token * k;
    m.sample_end = m.sample_begin + k;
    return m;
}

}  // namespace

TokenParts embed_patches(const WindowView& window, const WindowSpec& spec, const TokenizerConfig& cfg,
                         const EmbedWeights& w) {
    cfg.validate(spec);
    if (window.length != spec.length)
        throw std::invalid_argument("tokenizer: window length " + std::to_string(window.length) +
                                    " does not match spec length " + std::to_string(spec.length));
    const auto targets = window.frame->target_channels();
    const auto contexts = window.frame->context_channels();
    const int64_t n = static_cast<int64_t>(targets.size());
    const int64_t m = static_cast<int64_t>(contexts.size());
    if (n == 0) throw std::invalid_argument("tokenizer: window has no target channels");
    const int64_t expect_ids = n + m;
    if (w.channel_id.defined() && w.channel_id.dim(0) < expect_ids)
        throw std::invalid_argument("tokenizer: channel_id rows " + std::to_string(w.channel_id.dim(0)) +
                                    " < channels " + std::to_string(expect_ids));

    const int64_t k = cfg.patch;
    const int64_t past_tokens = spec.past_len / k;
    const int64_t future_tokens = spec.future_len / k;
    const int64_t ctx_tokens = past_tokens + future_tokens;

    TokenParts parts;

    auto build_block = [&](const std::vector<int>& channels, ChannelRole role, int64_t id_offset,
                           TokenKind kind, int64_t first_sample, int64_t first_pos, int64_t tokens,
                           const Tensor& patch_map, TokenTensor* out) {
        Tensor pe = make_scaled_posenc(first_pos, tokens, cfg, w.pos_gain);
        std::vector<Tensor> cols;
        out->token_missing.assign(static_cast<size_t>(tokens), {});
        for (size_t ci = 0; ci < channels.size(); ++ci) {
            Tensor id_row;
            if (cfg.channel_identity)
                id_row = reshape(slice(w.channel_id, 0, static_cast<int>(id_offset + static_cast<int64_t>(ci)), 1),
                                 {static_cast<int>(cfg.embed_dim)});
            std::vector<uint8_t> col_missing;
            cols.push_back(embed_channel(window, channels[ci], first_sample, tokens, cfg, patch_map,
                                         id_row, pe, &col_missing));
            for (int64_t t = 0; t < tokens; ++t)
                out->token_missing[static_cast<size_t>(t)].push_back(col_missing[static_cast<size_t>(t)]);
        }
        out->data = cols.size() == 1 ? cols[0] : concat(cols, 1);
        for (int64_t t = 0; t < tokens; ++t) out->time_meta.push_back(sample_meta(kind, first_sample, t, k));
        out->channel_meta.assign(channels.size(), role);
    };

    build_block(targets, ChannelRole::target, 0, TokenKind::past, 0, 0, past_tokens, w.target_patch,
                &parts.past);
    build_block(targets, ChannelRole::target, 0, TokenKind::future, spec.past_len, past_tokens,
                future_tokens, w.target_patch, &parts.future);

    if (m > 0) {
        // context spans the full window (ctx_tokens slots); kinds split
        // past/future by slot so mask_future can see the boundary
        TokenTensor ctx_past, ctx_future;
        build_block(contexts, ChannelRole::context, n, TokenKind::past, 0, 0, past_tokens,
                    w.context_patch, &ctx_past);
        build_block(contexts, ChannelRole::context, n, TokenKind::future, spec.past_len, past_tokens,
                    future_tokens, w.context_patch, &ctx_future);
        parts.ctx.data = concat({ctx_past.data, ctx_future.data}, 0);
        parts.ctx.time_meta = std::move(ctx_past.time_meta);
        parts.ctx.time_meta.insert(parts.ctx.time_meta.end(), ctx_future.time_meta.begin(),
                                   ctx_future.time_meta.end());
        parts.ctx.channel_meta.assign(static_cast<size_t>(m), ChannelRole::context);
        parts.ctx.token_missing = std::move(ctx_past.token_missing);
        parts.ctx.token_missing.insert(parts.ctx.token_missing.end(), ctx_future.token_missing.begin(),
                                       ctx_future.token_missing.end());
        if (parts.ctx.time_tokens() != ctx_tokens)
            throw std::logic_error("tokenizer: context token count mismatch");
    }
    return parts;
}

TokenTensor mask_future(const TokenTensor& tokens, const Tensor& gen_token, bool mask_context_future) {
    const int64_t T = tokens.time_tokens();
    const int64_t C = tokens.channels();
    const int64_t d = tokens.data.dim(2);
    if (gen_token.size() != d)
        throw std::invalid_argument("tokenizer: gen_token length " + std::to_string(gen_token.size()) +
                                    " != embed dim " + std::to_string(d));

    std::vector<double> keep(static_cast<size_t>(T * C * d), 1.0);
    std::vector<double> repl(static_cast<size_t>(T * C * d), 0.0);
    bool any = false;
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t c = 0; c < C; ++c) {
            const bool future_masked =
                tokens.time_meta[static_cast<size_t>(t)].kind == TokenKind::future &&
                (tokens.channel_meta[static_cast<size_t>(c)] == ChannelRole::target ||
                 mask_context_future);
            const bool missing = tokens.token_missing[static_cast<size_t>(t)][static_cast<size_t>(c)] != 0;
            if (!future_masked && !missing) continue;
            any = true;
            for (int64_t j = 0; j < d; ++j) {
                keep[static_cast<size_t>((t * C + c) * d + j)] = 0.0;
                repl[static_cast<size_t>((t * C + c) * d + j)] = 1.0;
            }
        }
    }

    TokenTensor out = tokens;
    if (!any) return out;
    const Shape shape = tokens.data.shape();
    out.data = add(mul(tokens.data, Tensor::constant(shape, std::move(keep))),
                   mul(Tensor::constant(shape, std::move(repl)), gen_token));
    return out;
}

TokenTensor assemble(const TokenTensor& z_past, const TokenTensor& z_future, const TokenTensor& z_ctx,
                     const Tensor& prompt_bank, const TokenizerConfig& cfg) {
    if (cfg.prompt_count < 1) throw std::invalid_argument("tokenizer: prompt_count must be >= 1");
    const int64_t n = z_past.channels();
    const int64_t m = z_ctx.data.defined() ? z_ctx.channels() : 0;
    const int64_t d = z_past.data.dim(2);
    if (z_future.channels() != n)
        throw std::invalid_argument("tokenizer: assemble: channel axis mismatch, past has " +
                                    std::to_string(n) + " targets, future has " +
                                    std::to_string(z_future.channels()));
    if (z_future.data.dim(2) != d || (m > 0 && z_ctx.data.dim(2) != d))
        throw std::invalid_argument("tokenizer: assemble: embedding axis mismatch");
    const int64_t sample_tokens = z_past.time_tokens() + z_future.time_tokens();
    if (m > 0 && z_ctx.time_tokens() != sample_tokens)
        throw std::invalid_argument("tokenizer: assemble: time axis mismatch, context has " +
                                    std::to_string(z_ctx.time_tokens()) + " tokens, targets have " +
                                    std::to_string(sample_tokens));
    const int64_t first_prompt_row = static_cast<int64_t>(cfg.anomaly_type) * cfg.prompt_count;
    if (first_prompt_row + cfg.prompt_count > prompt_bank.dim(0))
        throw std::invalid_argument("tokenizer: prompt bank has " + std::to_string(prompt_bank.dim(0)) +
                                    " rows, anomaly_type " + std::to_string(cfg.anomaly_type) +
                                    " needs rows up to " +
                                    std::to_string(first_prompt_row + cfg.prompt_count));

    // target columns: [past; future] along time; context columns ride along
    Tensor targets = concat({z_past.data, z_future.data}, 0);  // [K/k, n, d]
    Tensor samples = m > 0 ? concat({targets, z_ctx.data}, 1) : targets;

    // prompt prefix: each slot's vector tiled across all channels
    const int64_t C = n + m;
    std::vector<Tensor> prompt_rows;
    for (int64_t s = 0; s < cfg.prompt_count; ++s) {
        Tensor v = reshape(slice(prompt_bank, 0, static_cast<int>(first_prompt_row + s), 1),
                           {1, 1, static_cast<int>(d)});
        std::vector<Tensor> tiled(static_cast<size_t>(C), v);
        prompt_rows.push_back(C == 1 ? v : concat(tiled, 1));
    }
    Tensor prompts = prompt_rows.size() == 1 ? prompt_rows[0] : concat(prompt_rows, 0);

    TokenTensor z;
    z.data = concat({prompts, samples}, 0);

    TokenMeta prompt_meta;
    prompt_meta.kind = TokenKind::prompt;
    z.time_meta.assign(static_cast<size_t>(cfg.prompt_count), prompt_meta);
    for (const auto& tm : z_past.time_meta) z.time_meta.push_back(tm);
    for (const auto& tm : z_future.time_meta) z.time_meta.push_back(tm);

    z.channel_meta.assign(static_cast<size_t>(n), ChannelRole::target);
    for (int64_t c = 0; c < m; ++c) z.channel_meta.push_back(ChannelRole::context);

    z.token_missing.assign(static_cast<size_t>(cfg.prompt_count),
                           std::vector<uint8_t>(static_cast<size_t>(C), 0));
    for (int64_t t = 0; t < sample_tokens; ++t) {
        std::vector<uint8_t> row;
        const auto& tgt_row = t < z_past.time_tokens()
                                  ? z_past.token_missing[static_cast<size_t>(t)]
                                  : z_future.token_missing[static_cast<size_t>(t - z_past.time_tokens())];
        row.insert(row.end(), tgt_row.begin(), tgt_row.end());
        if (m > 0) {
            const auto& ctx_row = z_ctx.token_missing[static_cast<size_t>(t)];
            row.insert(row.end(), ctx_row.begin(), ctx_row.end());
        }
        z.token_missing.push_back(std::move(row));
    }
    return z;
}

}  // namespace vigil
