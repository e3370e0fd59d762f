#pragma once

#include <cstdint>
#include <vector>

#include "vigil/series.hpp"
#include "vigil/tensor.hpp"

namespace vigil {

enum class TokenKind { prompt, past, future };

struct TokenMeta {
    TokenKind kind = TokenKind::past;
    int64_t sample_begin = -1;  // window-relative source range, [-1,-1) for prompts
    int64_t sample_end = -1;
};

// Dense [time_tokens x channels x d] token block plus axis bookkeeping.
// token_missing marks tokens whose source samples are all missing.
struct TokenTensor {
    Tensor data;
    std::vector<TokenMeta> time_meta;
    std::vector<ChannelRole> channel_meta;
    std::vector<std::vector<uint8_t>> token_missing;  // [time_token][channel]

    int64_t time_tokens() const { return static_cast<int64_t>(time_meta.size()); }
    int64_t channels() const { return static_cast<int64_t>(channel_meta.size()); }
};

struct TokenizerConfig {
    int64_t patch = 2;         // k, samples per token
    int64_t embed_dim = 16;    // d
    int64_t prompt_count = 1;  // p
    int anomaly_type = 0;      // row selector into the prompt bank
    bool channel_identity = true;      // add learned per-channel vectors
    bool mask_context_future = false;  // GEN-mask context tokens in the future span

    // k must divide future_len and past_len, with at least one token each.
    void validate(const WindowSpec& spec) const;
};

// Learned embedding-stage weights. Patch maps are k->d, shared across
// channels of the same role; channel_id rows follow the assembled channel
// order (targets first, then contexts). pos_gain scales the sinusoidal
// position encoding so zero weights embed to exactly zero tokens.
struct EmbedWeights {
    Tensor target_patch;   // [k, d]
    Tensor context_patch;  // [k, d]
    Tensor channel_id;     // [n+m, d]
    Tensor pos_gain;       // [1]
    Tensor gen_token;      // [d]
    Tensor prompt_bank;    // [anomaly_types * prompt_count, d]
};

struct TokenParts {
    TokenTensor past;    // [(K-lambda)/k x n x d]
    TokenTensor future;  // [lambda/k x n x d]
    TokenTensor ctx;     // [K/k x m x d]; data undefined when m == 0
};

// Patchify one window into past/future target tokens and full-window
// context tokens. Missing samples are zero-filled before embedding; the
// per-token all-missing flags land in token_missing for mask_future.
TokenParts embed_patches(const WindowView& window, const WindowSpec& spec, const TokenizerConfig& cfg,
                         const EmbedWeights& w);

// Replaces with gen_token: every future-kind token on target channels
// (context too when mask_context_future), and every token whose source
// samples are all missing. Idempotent.
TokenTensor mask_future(const TokenTensor& tokens, const Tensor& gen_token,
                        bool mask_context_future = false);

// Z = [prompt prefix; time tokens] x [targets; contexts] x d. Prompt rows
// broadcast the selected prompt-bank vectors across all channels.
TokenTensor assemble(const TokenTensor& z_past, const TokenTensor& z_future, const TokenTensor& z_ctx,
                     const Tensor& prompt_bank, const TokenizerConfig& cfg);

}  // namespace vigil
