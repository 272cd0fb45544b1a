#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stsens/mat.hpp"
#include "stsens/panel.hpp"
#include "stsens/rng.hpp"
#include "stsens/tape.hpp"
#include "stsens/windows.hpp"

namespace stsens {

struct ModelConfig {
    int d_model = 16;
    int heads = 4;
    double dropout = 0.2;
    int past_len = 13;
    int horizon = 15;
    int n_static = 0;
    int n_past = 0;    // targets + observed + known, in that column order
    int n_future = 0;  // known
    int n_target = 0;

    int d_attn() const { return d_model / heads; }
    int d_value() const { return d_model; }
    int combined() const { return past_len + horizon; }

    void validate() const;
    static ModelConfig for_panel(const FeaturePanel& panel, const WindowSpec& spec, int d_model = 16,
                                 int heads = 4, double dropout = 0.2);
};

// Ordered, named parameter arrays. Registration order is the canonical
// order for checkpoints, gradient accumulation and the optimizer.
struct ParamSet {
    std::vector<std::pair<std::string, Mat>> items;
    std::map<std::string, int> index;

    Mat& add(const std::string& name, int rows, int cols);
    const Mat& at(const std::string& name) const;
    Mat& at(const std::string& name);
    bool has(const std::string& name) const { return index.count(name) != 0; }
    size_t total_values() const;

    // Same names/shapes, all zeros — gradient and moment buffers.
    ParamSet zeros_like() const;
    void check_finite() const;  // throws naming the offending array
};

// Builds all learnable weights for the configuration; seeded scaled-uniform
// init with bound 1/sqrt(fan_in), biases zero, layernorm gain one.
ParamSet init_params(const ModelConfig& cfg, uint64_t seed);

// Per-tape handles to every parameter, in ParamSet order.
struct TapeBinding {
    std::vector<Var> vars;
    const ParamSet* params = nullptr;

    Var operator()(const std::string& name) const;
    // grads_out[i] += tape.grad(vars[i]) * scale_factor
    void accumulate_grads(const Tape& tape, ParamSet& grads_out, double scale_factor = 1.0) const;
};

TapeBinding bind_params(Tape& tape, const ParamSet& params);

// Gated residual network: LayerNorm(skip(x) + GLU(dense2(ELU(dense1(x) +
// context)))). `prefix` selects the parameter group. Dropout (train mode)
// sits after the first dense layer.
Var grn_forward(Tape& tape, const TapeBinding& P, const std::string& prefix, Var x,
                std::optional<Var> context, bool train_mode, double dropout, Rng* rng);

// Variable selection over per-feature embedding sequences. Returns the
// combined sequence [S x d_model] and the softmax weights [S x F].
struct VsnOut {
    Var combined;
    Var weights;
};
VsnOut vsn_forward(Tape& tape, const TapeBinding& P, const std::string& prefix,
                   const std::vector<Var>& feature_embeddings, std::optional<Var> context,
                   bool train_mode, double dropout, Rng* rng);

// Interpretable multi-head attention: per-head softmax(Q Wq (K Wk)^T /
// sqrt(d_attn)) with a shared value projection V Wv, head-averaged, mapped
// by Wh. The mask must be causal (allowed entries exactly j <= i) or the
// call throws. Returns the output and the per-head attention matrices.
struct MhaOut {
    Var output;
    std::vector<Var> head_attention;
};
MhaOut interpretable_mha(Tape& tape, const TapeBinding& P, Var q, Var k, Var v, const Mat& mask);

// Convenience: the canonical causal mask (ones at j <= i).
Mat causal_mask(int n);

// Full network forward for one window.
struct WindowForward {
    Var pred;  // [horizon x n_target], scaled units
    std::vector<Var> head_attention;
    Var vsn_static_weights;  // [1 x n_static]
    Var vsn_past_weights;    // [past_len x n_past]
    Var vsn_future_weights;  // [horizon x n_future]
};

WindowForward tft_forward(Tape& tape, const TapeBinding& P, const ModelConfig& cfg,
                          const WindowData& window, bool train_mode, Rng* dropout_rng);

// Inference for one window (no gradients, no dropout).
struct WindowOutput {
    Mat pred;                    // [horizon x n_target]
    std::vector<Mat> attention;  // heads x [d_s x d_s]
    Mat vsn_static_weights;
    Mat vsn_past_weights;
    Mat vsn_future_weights;
};

WindowOutput eval_window(const ParamSet& params, const ModelConfig& cfg, const WindowData& window);

// Throws unless rows sum to one over unmasked entries (1e-6) and entries
// above the diagonal are exactly zero.
void verify_attention_invariants(const Mat& attention);

}  // namespace stsens
