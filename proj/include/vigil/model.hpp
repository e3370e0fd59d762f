#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vigil/rng.hpp"
#include "vigil/series.hpp"
#include "vigil/tensor.hpp"
#include "vigil/tokenizer.hpp"

namespace vigil {

struct ModelConfig {
    int blocks = 2;          // N transformer blocks (paper scale: 3)
    int heads = 2;
    int64_t embed_dim = 16;  // d (paper scale: 128)
    int64_t patch = 2;       // k
    int64_t prompt_count = 1;
    int anomaly_types = 4;
    int anomaly_type = 0;    // active prompt row
    int64_t ffn_hidden = 0;  // 0 -> 2*embed_dim
    int64_t dylinear_base = 8;  // design length of DyLinear weight vectors
    double dropout = 0.0;       // train-time only; keep 0 for bit determinism
    uint64_t seed = 1;
    bool per_feature_gates = false;  // scalar branch gates by default
    bool channel_identity = true;
    bool mask_context_future = false;

    void validate() const;
    TokenizerConfig tokenizer() const;
};

struct AttnParams {
    Tensor wq, wk, wv, wo;  // [d, d]
    Tensor bq, bk, bv, bo;  // [d]
};

struct BlockParams {
    Tensor ln1_scale, ln1_shift;  // [d], pre-norm of the time branch
    AttnParams time_attn;
    Tensor gate_time;  // [1], or [d] with per_feature_gates
    Tensor ln2_scale, ln2_shift;
    AttnParams var_attn;
    Tensor gate_var;
    Tensor ln3_scale, ln3_shift;
    Tensor ffn_w1, ffn_b1;  // [d, h], [h]
    Tensor ffn_w2, ffn_b2;  // [h, d], [d]
    Tensor ffn_dyw;         // [dylinear_base], modulates the hidden along token time
    Tensor gate_ffn;
};

struct TowerParams {
    Tensor mlp_w1, mlp_b1;  // [d, h], [h]
    Tensor mlp_w2, mlp_b2;  // [h, d], [d]
    Tensor dyw;             // [dylinear_base]
    Tensor proj_w, proj_b;  // [d, k], [k]
};

struct ModelParams {
    EmbedWeights embed;
    std::vector<BlockParams> blocks;
    TowerParams tower;

    // Canonical (name, tensor) order; checkpoint layout and gradient checks
    // both key off this.
    std::vector<std::pair<std::string, Tensor>> named() const;
    std::vector<Tensor> all() const;
};

// Per-channel train-split mean/std. Degenerate channels (no observations or
// near-zero spread) standardize with std 1 so round-trips stay exact.
struct Standardizer {
    std::vector<std::string> channel_names;
    std::vector<double> mean, stdev;

    static Standardizer fit(const std::vector<const SeriesFrame*>& frames);
    SeriesFrame apply(const SeriesFrame& frame) const;  // observed cells only
    double destandardize(int channel, double v) const;
};

struct ForwardTrace {
    std::vector<Tensor> attention_rows;  // every softmax output, row-normalized
};

struct ForwardResult {
    TokenTensor z_out;
    Tensor xhat;  // [future_len, n] in standardized units
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean window loss per epoch
    int64_t windows_used = 0;
    int64_t windows_skipped = 0;  // future targets entirely missing
};

// Masked MSE: mean squared error over cells whose ground truth is observed.
// truth/miss are [future_len x n] row-major; throws when nothing is observed.
Tensor reconstruction_loss(const Tensor& xhat, const std::vector<double>& truth,
                           const std::vector<uint8_t>& miss);

// One per-patient network. Parameters live on an internal tape; training
// and scoring share it (reset per window).
class Model {
public:
    Model(const ModelConfig& cfg, const WindowSpec& spec, int n_targets, int m_contexts);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return cfg_; }
    const WindowSpec& window_spec() const { return spec_; }
    Tape& tape() { return *tape_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    int targets() const { return n_; }
    int contexts() const { return m_; }
    bool trained() const { return trained_; }
    void set_trained(bool t) { trained_ = t; }  // checkpoint load path
    void set_anomaly_type(int type);
    const Standardizer& scaler() const { return scaler_; }
    void set_scaler(Standardizer s) { scaler_ = std::move(s); }
    const std::vector<double>& loss_trace() const { return loss_trace_; }
    void set_loss_trace(std::vector<double> t) { loss_trace_ = std::move(t); }

    SeriesFrame standardize(const SeriesFrame& frame) const;

    // Tokenize one window of an already standardized frame, GEN-mask the
    // future, run the blocks and the Tower. Resets the tape first.
    ForwardResult forward_window(const WindowView& window, ForwardTrace* trace = nullptr);

    // Loss of one standardized window against its own observed future.
    Tensor window_loss(const WindowView& window);

    // Fits the scaler, then runs masked-future reconstruction training over
    // shuffled windows of the given frames with per-epoch lr decay.
    TrainResult train(const std::vector<const SeriesFrame*>& frames, int epochs, double lr,
                      double lr_decay = 0.9);

    // Predicted future targets for the window at `offset`, original units.
    std::vector<std::vector<double>> impute(const SeriesFrame& raw_frame, int64_t offset);

private:
    ModelConfig cfg_;
    WindowSpec spec_;
    int n_, m_;
    std::unique_ptr<Tape> tape_;
    ModelParams params_;
    Standardizer scaler_;
    std::vector<double> loss_trace_;
    bool trained_ = false;
    bool training_mode_ = false;
    Rng drop_rng_{0};

    Tensor run_blocks(Tensor z, int64_t time_tokens, ForwardTrace* trace);
    Tensor mhsa(const Tensor& x, const AttnParams& p, ForwardTrace* trace);
    Tensor tower_head(const Tensor& z_out, int64_t future_tokens);
    Tensor maybe_dropout(Tensor x);
};

}  // namespace vigil
