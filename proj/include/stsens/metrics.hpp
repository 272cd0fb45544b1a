#pragma once

#include <string>
#include <vector>

#include "stsens/checkpoint.hpp"
#include "stsens/panel.hpp"
#include "stsens/windows.hpp"

namespace stsens {

double mae(const std::vector<double>& pred, const std::vector<double>& obs);
double rmse(const std::vector<double>& pred, const std::vector<double>& obs);
// 2|y-ŷ|/(|y|+|ŷ|) averaged over cells; a cell with y = ŷ = 0 contributes 0.
double smape(const std::vector<double>& pred, const std::vector<double>& obs);
// NSE = 1 - SSE/SSTot, NNSE = 1/(2-NSE). Throws when obs has zero variance.
std::pair<double, double> nnse(const std::vector<double>& pred, const std::vector<double>& obs);

struct TargetMetrics {
    std::string target;
    double mae = 0, rmse = 0, smape = 0, nse = 0, nnse = 0;
};

struct MetricsReport {
    std::string model;  // "tft" or "persistence"
    std::vector<TargetMetrics> per_target;
};

// Repeats the last observed target value across the horizon.
// past_targets is [past_len x F_tgt]; result is [horizon x F_tgt].
Mat persistence_forecast(const Mat& past_targets, int horizon);

// Pools every (window, horizon step) cell per target over the panel's
// windows, inverse-scales predictions and observations to original units,
// and computes the metric set. With use_model=false the persistence
// baseline is evaluated instead of the checkpointed model.
MetricsReport evaluate(const Checkpoint& ckpt, const FeaturePanel& scaled_panel,
                       const WindowSpec& wspec, bool use_model);

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::string& path);
void write_metrics_json(const std::vector<MetricsReport>& reports, const std::string& path);

}  // namespace stsens
