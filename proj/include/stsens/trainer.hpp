#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsens/model.hpp"
#include "stsens/windows.hpp"

namespace stsens {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 100;
    int patience = 10;
    double grad_clip_norm = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> epoch_seconds;
    int best_epoch = -1;  // index into the vectors
    double wall_seconds = 0.0;
};

// Mean of squared differences over all elements. Shapes must match.
double mse_loss(const Mat& pred, const Mat& target);

struct BatchGrad {
    double loss = 0.0;
    ParamSet grads;  // d(batch mean MSE)/d(params)
};

// Forward+backward over a batch of windows. Per-window work runs in
// parallel; gradients are reduced in window order so the result is
// independent of the thread count. dropout_streams[i] seeds window i's
// dropout draw (ignored in eval mode).
BatchGrad batch_backward(const ParamSet& params, const ModelConfig& cfg,
                         const std::vector<const WindowData*>& windows,
                         const std::vector<uint64_t>& dropout_streams, bool train_mode);

// Mean per-window MSE in eval mode (parallel, deterministic reduction).
double eval_mse(const ParamSet& params, const ModelConfig& cfg,
                const std::vector<WindowData>& windows);

struct AdamState {
    ParamSet m, v;
    long step = 0;
};

AdamState init_adam(const ParamSet& params);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_global_norm(ParamSet& grads, double max_norm);

// Global-norm clip followed by an Adam update (beta1 0.9, beta2 0.999,
// eps 1e-8). Throws if gradients are non-finite after the clip.
void adam_step(ParamSet& params, ParamSet grads, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
    ParamSet best_params;
    ModelConfig config;
    TrainReport report;
};

// Mini-batch training with per-epoch validation; keeps the parameters of
// the epoch with the lowest validation loss and stops after `patience`
// epochs without a new best.
TrainResult train(const SplitPanels& splits, const ModelConfig& cfg, const TrainConfig& tcfg,
                  const WindowSpec& wspec);

struct GridSpec {
    std::vector<double> learning_rates = {1e-3, 1e-4};
    std::vector<int> hidden_sizes = {16, 32, 64};
    std::vector<int> head_counts = {1, 4};
    std::vector<double> clip_norms = {0.01, 1.0};
};

struct GridEntry {
    ModelConfig mcfg;
    TrainConfig tcfg;
    double val_loss = 0.0;  // +inf when the run failed
    std::string error;
};

struct GridResult {
    std::vector<GridEntry> entries;
    int best_index = -1;  // argmin val_loss, first on ties
};

// Exhaustive product over the grid; every combination trains with the same
// seed and split. Failed combinations are recorded with +inf loss.
GridResult grid_search(const GridSpec& grid, const SplitPanels& splits, const ModelConfig& base_cfg,
                       const TrainConfig& base_tcfg, const WindowSpec& wspec);

void write_train_log_csv(const TrainReport& report, const std::string& path);

}  // namespace stsens
