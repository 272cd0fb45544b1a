#include "stsens/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "stsens/csvio.hpp"
#include "stsens/parallel.hpp"

namespace stsens {

namespace {

void check_pair(const std::vector<double>& pred, const std::vector<double>& obs, const char* what) {
    if (pred.size() != obs.size())
        throw std::invalid_argument(std::string(what) + ": size mismatch " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(obs.size()));
    if (pred.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}

}  // namespace

double mae(const std::vector<double>& pred, const std::vector<double>& obs) {
    check_pair(pred, obs, "mae");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - obs[i]);
    return s / static_cast<double>(pred.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& obs) {
    check_pair(pred, obs, "rmse");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - obs[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double smape(const std::vector<double>& pred, const std::vector<double>& obs) {
    check_pair(pred, obs, "smape");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double denom = std::abs(obs[i]) + std::abs(pred[i]);
        if (denom > 0.0) s += 2.0 * std::abs(pred[i] - obs[i]) / denom;
    }
    return s / static_cast<double>(pred.size());
}

std::pair<double, double> nnse(const std::vector<double>& pred, const std::vector<double>& obs) {
    check_pair(pred, obs, "nnse");
    double mean = 0.0;
    for (double y : obs) mean += y;
    mean /= static_cast<double>(obs.size());
    double sse = 0.0, sstot = 0.0;
    for (size_t i = 0; i < obs.size(); ++i) {
        sse += (obs[i] - pred[i]) * (obs[i] - pred[i]);
        sstot += (obs[i] - mean) * (obs[i] - mean);
    }
    if (sstot == 0.0) throw std::invalid_argument("nnse: observations have zero variance");
    double nse = 1.0 - sse / sstot;
    return {nse, 1.0 / (2.0 - nse)};
}

Mat persistence_forecast(const Mat& past_targets, int horizon) {
    if (past_targets.rows < 1) throw std::invalid_argument("persistence_forecast: empty past window");
    Mat out(horizon, past_targets.cols);
    const double* last = past_targets.row(past_targets.rows - 1);
    for (int i = 0; i < horizon; ++i)
        for (int j = 0; j < past_targets.cols; ++j) out(i, j) = last[j];
    return out;
}

MetricsReport evaluate(const Checkpoint& ckpt, const FeaturePanel& scaled_panel,
                       const WindowSpec& wspec, bool use_model) {
    auto refs = make_windows(scaled_panel, wspec);
    if (refs.empty()) throw std::invalid_argument("evaluate: no windows in panel");
    const int F_tgt = scaled_panel.n_target();
    const int H = wspec.horizon;

    std::vector<Mat> preds(refs.size());
    std::vector<Mat> truth(refs.size());
    std::vector<std::string> errors(refs.size());
    parallel_for(static_cast<int>(refs.size()), [&](int i) {
        try {
            WindowData w = materialize(scaled_panel, wspec, refs[i]);
            truth[i] = w.target;
            if (use_model) {
                preds[i] = eval_window(ckpt.params, ckpt.config, w).pred;
            } else {
                // past target columns are the leading F_tgt columns
                Mat past_targets(w.past.rows, F_tgt);
                for (int r = 0; r < w.past.rows; ++r)
                    for (int f = 0; f < F_tgt; ++f) past_targets(r, f) = w.past(r, f);
                preds[i] = persistence_forecast(past_targets, H);
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

    MetricsReport report;
    report.model = use_model ? "tft" : "persistence";
    for (int f = 0; f < F_tgt; ++f) {
        const std::string& name = scaled_panel.target_names[f];
        std::vector<double> p, o;
        p.reserve(refs.size() * H);
        o.reserve(refs.size() * H);
        for (size_t i = 0; i < refs.size(); ++i)
            for (int h = 0; h < H; ++h) {
                p.push_back(ckpt.scaler.unscale_value(name, preds[i](h, f)));
                o.push_back(ckpt.scaler.unscale_value(name, truth[i](h, f)));
            }
        TargetMetrics m;
        m.target = name;
        m.mae = mae(p, o);
        m.rmse = rmse(p, o);
        m.smape = smape(p, o);
        std::tie(m.nse, m.nnse) = nnse(p, o);
        report.per_target.push_back(m);
    }
    return report;
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "model,target,mae,rmse,smape,nse,nnse\n";
    for (const auto& r : reports)
        for (const auto& m : r.per_target)
            out << r.model << "," << m.target << "," << fmt_double(m.mae) << "," << fmt_double(m.rmse)
                << "," << fmt_double(m.smape) << "," << fmt_double(m.nse) << "," << fmt_double(m.nnse)
                << "\n";
}

void write_metrics_json(const std::vector<MetricsReport>& reports, const std::string& path) {
    nlohmann::ordered_json j;
    j["smape_convention"] = "2|y-yhat|/(|y|+|yhat|), both-zero cells contribute 0";
    j["units"] = "original target units (inverse-scaled)";
    for (const auto& r : reports)
        for (const auto& m : r.per_target) {
            std::string key = r.model + "." + m.target;
            j[key + ".mae"] = m.mae;
            j[key + ".rmse"] = m.rmse;
            j[key + ".smape"] = m.smape;
            j[key + ".nse"] = m.nse;
            j[key + ".nnse"] = m.nnse;
        }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace stsens
