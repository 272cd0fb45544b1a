#include "stsens/morris.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "stsens/csvio.hpp"
#include "stsens/parallel.hpp"

namespace stsens {

double elementary_effect(const std::function<double(const std::vector<double>&)>& model,
                         const std::vector<double>& point, int i, double delta) {
    if (delta == 0.0) throw std::invalid_argument("elementary_effect: delta must be nonzero");
    if (i < 0 || static_cast<size_t>(i) >= point.size())
        throw std::invalid_argument("elementary_effect: feature index out of range");
    double base = model(point);
    std::vector<double> shifted = point;
    shifted[i] += delta;
    double moved = model(shifted);
    if (!std::isfinite(base) || !std::isfinite(moved))
        throw std::runtime_error("elementary_effect: model produced a non-finite output");
    return (moved - base) / delta;
}

FeaturePanel perturb_feature(const FeaturePanel& scaled_panel, const std::string& feature,
                             double delta) {
    FeaturePanel out = scaled_panel;
    FeatureRole role = scaled_panel.role_of(feature);  // throws on unknown feature
    int f = scaled_panel.index_of(feature);
    switch (role) {
        case FeatureRole::Static:
            for (int c = 0; c < out.C(); ++c) out.stat(c, f) += delta;
            break;
        case FeatureRole::Observed:
            for (int c = 0; c < out.C(); ++c)
                for (int t = 0; t < out.T(); ++t) out.obs(c, t, f) += delta;
            break;
        case FeatureRole::Known:
            for (int c = 0; c < out.C(); ++c)
                for (int t = 0; t < out.T(); ++t) out.knw(c, t, f) += delta;
            break;
        case FeatureRole::Target:
            for (int c = 0; c < out.C(); ++c)
                for (int t = 0; t < out.T(); ++t) out.tgt(c, t, f) += delta;
            break;
    }
    return out;
}

TftPredictor::TftPredictor(const Checkpoint& ckpt, WindowSpec wspec, const std::string& target)
    : ckpt_(ckpt), wspec_(wspec) {
    if (target == "all") {
        target_idx_ = -1;
    } else {
        auto it = std::find(ckpt.target_names.begin(), ckpt.target_names.end(), target);
        if (it == ckpt.target_names.end())
            throw std::invalid_argument("morris: model has no target '" + target + "'");
        target_idx_ = static_cast<int>(it - ckpt.target_names.begin());
    }
}

std::vector<Mat> TftPredictor::predict(const FeaturePanel& scaled_panel, Date start, Date end) const {
    int t0 = scaled_panel.date_index(start);
    int t1 = scaled_panel.date_index(end);
    if (t0 < 0 || t1 < 0 || t1 < t0)
        throw std::invalid_argument("morris: evaluation range " + start.iso() + ".." + end.iso() +
                                    " not inside panel");
    // every date needs past context and a full known-future horizon
    Date lo = scaled_panel.dates.front() + wspec_.past_len;
    Date hi = scaled_panel.dates.back() - (wspec_.horizon - 1);
    if (start < lo || end > hi)
        throw std::invalid_argument("morris: no complete windows for range " + start.iso() + ".." +
                                    end.iso() + "; valid prediction starts are " + lo.iso() + ".." +
                                    hi.iso());

    const int C = scaled_panel.C();
    const long T = t1 - t0 + 1;
    const int n_out = target_idx_ < 0 ? ckpt_.config.n_target : 1;
    std::vector<Mat> grids(n_out, Mat(C, static_cast<int>(T)));

    const long total = static_cast<long>(C) * T;
    std::vector<std::string> errors(total);
    parallel_for(static_cast<int>(total), [&](int i) {
        int c = static_cast<int>(i / T);
        int dt = static_cast<int>(i % T);
        try {
            WindowRef ref{c, t0 + dt - wspec_.past_len};
            WindowData w = materialize(scaled_panel, wspec_, ref);
            WindowOutput o = eval_window(ckpt_.params, ckpt_.config, w);
            if (target_idx_ < 0) {
                for (int f = 0; f < ckpt_.config.n_target; ++f) grids[f](c, dt) = o.pred(0, f);
            } else {
                grids[0](c, dt) = o.pred(0, target_idx_);
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);
    return grids;
}

std::vector<Mat> LinearSurrogate::predict(const FeaturePanel& scaled_panel, Date start,
                                          Date end) const {
    int t0 = scaled_panel.date_index(start);
    int t1 = scaled_panel.date_index(end);
    if (t0 < 0 || t1 < 0 || t1 < t0) throw std::invalid_argument("surrogate: bad evaluation range");
    FeatureRole role = scaled_panel.role_of(feature_);
    int f = scaled_panel.index_of(feature_);
    Mat grid(scaled_panel.C(), t1 - t0 + 1);
    for (int c = 0; c < scaled_panel.C(); ++c)
        for (int t = t0; t <= t1; ++t) {
            double x = 0.0;
            switch (role) {
                case FeatureRole::Static: x = scaled_panel.stat(c, f); break;
                case FeatureRole::Observed: x = scaled_panel.obs(c, t, f); break;
                case FeatureRole::Known: x = scaled_panel.knw(c, t, f); break;
                case FeatureRole::Target: x = scaled_panel.tgt(c, t, f); break;
            }
            grid(c, t - t0) = a_ * x;
        }
    return {grid};
}

std::vector<Mat> ConstantSurrogate::predict(const FeaturePanel& scaled_panel, Date start,
                                            Date end) const {
    int t0 = scaled_panel.date_index(start);
    int t1 = scaled_panel.date_index(end);
    if (t0 < 0 || t1 < 0 || t1 < t0) throw std::invalid_argument("surrogate: bad evaluation range");
    return {Mat(scaled_panel.C(), t1 - t0 + 1, value_)};
}

void MorrisConfig::validate() const {
    if (deltas.empty()) throw std::invalid_argument("morris: at least one delta required");
    for (double d : deltas)
        if (d == 0.0) throw std::invalid_argument("morris: delta must be nonzero");
    if (feature.empty()) throw std::invalid_argument("morris: feature name required");
}

MorrisResult normalized_morris(const PanelPredictor& model, const FeaturePanel& scaled_panel,
                               const MorrisConfig& cfg, double sigma_i) {
    cfg.validate();
    if (!scaled_panel.has_feature(cfg.feature))
        throw std::invalid_argument("morris: panel has no feature '" + cfg.feature + "'");

    std::vector<Mat> baseline = model.predict(scaled_panel, cfg.eval_start, cfg.eval_end);

    MorrisResult result;
    result.feature = cfg.feature;
    for (double delta : cfg.deltas) {
        FeaturePanel perturbed = perturb_feature(scaled_panel, cfg.feature, delta);
        std::vector<Mat> moved = model.predict(perturbed, cfg.eval_start, cfg.eval_end);

        MorrisRow row;
        row.delta = delta;
        row.C = baseline[0].rows;
        row.T = baseline[0].cols;
        double G = 0.0;
        for (size_t g = 0; g < baseline.size(); ++g) {
            const Mat& y0 = baseline[g];
            const Mat& y1 = moved[g];
            // spatial-inner / temporal-outer accumulation; the sum of
            // absolute values makes the order immaterial
            for (int t = 0; t < y0.cols; ++t)
                for (int c = 0; c < y0.rows; ++c) G += std::abs(y1(c, t) - y0(c, t));
        }
        if (!std::isfinite(G)) throw std::runtime_error("morris: non-finite output change");
        row.G = G;
        row.mu_star = G / (static_cast<double>(row.C) * static_cast<double>(row.T) * std::abs(delta));
        row.sigma = sigma_i;
        row.scaled_index = row.mu_star * sigma_i;
        result.rows.push_back(row);
    }
    return result;
}

double raw_feature_std(const FeaturePanel& scaled_panel, const ScalerState& scaler,
                       const std::string& feature, Date from, Date to) {
    double scaled_std = feature_std(scaled_panel, feature, from, to);
    return scaled_std * scaler.range_width(feature);
}

void write_morris_csv(const std::vector<MorrisResult>& results, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "feature,delta,G,C,T,mu_star,sigma,scaled_index\n";
    for (const auto& r : results)
        for (const auto& row : r.rows)
            out << r.feature << "," << fmt_double(row.delta) << "," << fmt_double(row.G) << "," << row.C
                << "," << row.T << "," << fmt_double(row.mu_star) << "," << fmt_double(row.sigma) << ","
                << fmt_double(row.scaled_index) << "\n";
}

std::vector<SubgroupRow> subgroup_experiment(const FeaturePanel& cleaned_panel,
                                             const SubgroupExperimentConfig& cfg) {
    if (cfg.subgroup_columns.empty())
        throw std::invalid_argument("subgroup_experiment: no subgroup columns");
    std::vector<SubgroupRow> rows;
    for (const auto& column : cfg.subgroup_columns) {
        SubgroupRow row;
        row.subgroup = column;
        try {
            if (!cleaned_panel.has_feature(column) ||
                cleaned_panel.role_of(column) != FeatureRole::Static)
                throw std::invalid_argument("subgroup column '" + column + "' not a static feature");
            int f = cleaned_panel.index_of(column);

            FeaturePanel variant = cleaned_panel;
            variant.static_names = {column};
            variant.statics.resize(variant.C());
            for (int c = 0; c < variant.C(); ++c) variant.statics[c] = cleaned_panel.stat(c, f);

            ScalerState scaler = fit_scaler(variant, cfg.split.train.start, cfg.split.train.end,
                                            "train " + cfg.split.train.start.iso() + ".." +
                                                cfg.split.train.end.iso());
            FeaturePanel scaled = apply_scaler(variant, scaler);
            SplitPanels splits = split(scaled, cfg.split, cfg.wspec);

            ModelConfig mcfg = ModelConfig::for_panel(scaled, cfg.wspec, cfg.base_model.d_model,
                                                      cfg.base_model.heads, cfg.base_model.dropout);
            TrainResult tr = train(splits, mcfg, cfg.tcfg, cfg.wspec);
            row.training_loss = tr.report.train_loss[tr.report.best_epoch];

            Checkpoint ckpt;
            ckpt.config = mcfg;
            ckpt.params = tr.best_params;
            ckpt.scaler = scaler;
            ckpt.static_names = scaled.static_names;
            ckpt.observed_names = scaled.observed_names;
            ckpt.known_names = scaled.known_names;
            ckpt.target_names = scaled.target_names;

            TftPredictor predictor(ckpt, cfg.wspec, ckpt.target_names[0]);
            MorrisConfig mc;
            mc.deltas = cfg.deltas;
            mc.eval_start = cfg.eval.start;
            mc.eval_end = cfg.eval.end;

            mc.feature = column;
            double sigma_sub = raw_feature_std(scaled, scaler, column, cfg.eval.start, cfg.eval.end);
            row.subgroup_scaled_index =
                normalized_morris(predictor, scaled, mc, sigma_sub).rows[0].scaled_index;

            mc.feature = cfg.dynamic_feature;
            double sigma_dyn =
                raw_feature_std(scaled, scaler, cfg.dynamic_feature, cfg.eval.start, cfg.eval.end);
            row.dynamic_scaled_index =
                normalized_morris(predictor, scaled, mc, sigma_dyn).rows[0].scaled_index;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_subgroup_csv(const std::vector<SubgroupRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "subgroup,training_loss,subgroup_scaled_index,dynamic_scaled_index,error\n";
    for (const auto& r : rows)
        out << r.subgroup << "," << fmt_double(r.training_loss) << ","
            << fmt_double(r.subgroup_scaled_index) << "," << fmt_double(r.dynamic_scaled_index) << ","
            << r.error << "\n";
}

}  // namespace stsens
