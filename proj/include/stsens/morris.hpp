#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stsens/checkpoint.hpp"
#include "stsens/panel.hpp"
#include "stsens/trainer.hpp"
#include "stsens/windows.hpp"

namespace stsens {

// Elementary effect of input i at a point, for plain scalar models:
// (y(..., x_i + delta, ...) - y(x)) / delta.
double elementary_effect(const std::function<double(const std::vector<double>&)>& model,
                         const std::vector<double>& point, int i, double delta);

// Adds delta to every cell of the named feature (each county and timestamp;
// for a static feature, each county's value). Inputs are expected in scaled
// space. Pure: returns a copy, everything else untouched.
FeaturePanel perturb_feature(const FeaturePanel& scaled_panel, const std::string& feature,
                             double delta);

// A model of the panel as a grid of one-step-ahead outputs: one [C x T]
// matrix per output column, T spanning [start, end].
class PanelPredictor {
public:
    virtual ~PanelPredictor() = default;
    virtual std::vector<Mat> predict(const FeaturePanel& scaled_panel, Date start, Date end) const = 0;
};

// Trained TFT: Y[c][t] is the first horizon step of the window whose
// prediction start is t. target selects one output column; "all" keeps
// every column (their absolute changes then sum into G).
class TftPredictor : public PanelPredictor {
public:
    TftPredictor(const Checkpoint& ckpt, WindowSpec wspec, const std::string& target);
    std::vector<Mat> predict(const FeaturePanel& scaled_panel, Date start, Date end) const override;

private:
    const Checkpoint& ckpt_;
    WindowSpec wspec_;
    int target_idx_;  // -1 = all
};

// y[c][t] = a * x_feature[c][t] exactly; validates the spatio-temporal
// index computation against a model whose sensitivity is known in closed
// form.
class LinearSurrogate : public PanelPredictor {
public:
    LinearSurrogate(std::string feature, double coefficient)
        : feature_(std::move(feature)), a_(coefficient) {}
    std::vector<Mat> predict(const FeaturePanel& scaled_panel, Date start, Date end) const override;

private:
    std::string feature_;
    double a_;
};

class ConstantSurrogate : public PanelPredictor {
public:
    explicit ConstantSurrogate(double value) : value_(value) {}
    std::vector<Mat> predict(const FeaturePanel& scaled_panel, Date start, Date end) const override;

private:
    double value_;
};

struct MorrisConfig {
    std::string feature;
    std::vector<double> deltas = {0.005};
    Date eval_start, eval_end;

    void validate() const;  // deltas nonzero and nonempty
};

struct MorrisRow {
    double delta = 0;
    double G = 0;        // total absolute output change, scaled units
    double mu_star = 0;  // G / (C*T*|delta|)
    double sigma = 0;    // raw-unit train std of the feature
    double scaled_index = 0;  // mu_star * sigma
    int C = 0;
    long T = 0;
};

struct MorrisResult {
    std::string feature;
    std::vector<MorrisRow> rows;
};

// Two full passes per delta (baseline reused across the sweep); G sums
// |Y_delta - Y| over counties, timestamps and the predictor's output
// columns, normalized by C*T*|delta|.
MorrisResult normalized_morris(const PanelPredictor& model, const FeaturePanel& scaled_panel,
                               const MorrisConfig& cfg, double sigma_i);

// sigma for the scaled index: the feature's train-range std in raw units,
// recovered through the scaler (min-max is affine).
double raw_feature_std(const FeaturePanel& scaled_panel, const ScalerState& scaler,
                       const std::string& feature, Date from, Date to);

void write_morris_csv(const std::vector<MorrisResult>& results, const std::string& path);

// One model per static subgroup column: train with that column as the only
// static input, then delta-sweep the subgroup feature and a shared dynamic
// feature.
struct SubgroupExperimentConfig {
    std::vector<std::string> subgroup_columns;
    std::string dynamic_feature;
    std::vector<double> deltas = {0.005};
    SplitSpec split;
    WindowSpec wspec;
    ModelConfig base_model;  // feature counts are recomputed per subgroup
    TrainConfig tcfg;
    DateRange eval;  // morris evaluation range
};

struct SubgroupRow {
    std::string subgroup;
    double training_loss = 0;
    double subgroup_scaled_index = 0;  // at the first delta
    double dynamic_scaled_index = 0;
    std::string error;  // nonempty when this subgroup's training failed
};

// Input panel must be cleaned but unscaled; each subgroup refits its own
// scaler. Failures are recorded per row, remaining subgroups still run.
std::vector<SubgroupRow> subgroup_experiment(const FeaturePanel& cleaned_panel,
                                             const SubgroupExperimentConfig& cfg);

void write_subgroup_csv(const std::vector<SubgroupRow>& rows, const std::string& path);

}  // namespace stsens
