#include "stsens/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "stsens/csvio.hpp"
#include "stsens/parallel.hpp"
#include "stsens/rng.hpp"

namespace stsens {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
    if (patience < 0) throw std::invalid_argument("train: patience must be >= 0");
    if (grad_clip_norm <= 0.0) throw std::invalid_argument("train: grad_clip_norm must be > 0");
}

double mse_loss(const Mat& pred, const Mat& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(pred) + " vs " +
                                    shape_str(target));
    if (pred.size() == 0) throw std::invalid_argument("mse_loss: empty input");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred.v[i] - target.v[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

BatchGrad batch_backward(const ParamSet& params, const ModelConfig& cfg,
                         const std::vector<const WindowData*>& windows,
                         const std::vector<uint64_t>& dropout_streams, bool train_mode) {
    if (windows.empty()) throw std::invalid_argument("batch_backward: empty batch");
    if (train_mode && dropout_streams.size() != windows.size())
        throw std::invalid_argument("batch_backward: one dropout stream per window required");

    const int n = static_cast<int>(windows.size());
    // Fixed-size chunks processed independently; each chunk accumulates its
    // windows in order, chunks are then combined in order. The reduction is
    // therefore identical no matter how chunks are scheduled over threads.
    const int chunk = 8;
    const int n_chunks = (n + chunk - 1) / chunk;
    std::vector<ParamSet> partial_grads(n_chunks);
    std::vector<double> partial_loss(n_chunks, 0.0);
    std::vector<std::string> errors(n_chunks);

    parallel_for(n_chunks, [&](int ci) {
        try {
            ParamSet grads = params.zeros_like();
            double loss = 0.0;
            Tape tape;
            for (int i = ci * chunk; i < std::min(n, (ci + 1) * chunk); ++i) {
                tape.reset();
                tape.recording = true;
                TapeBinding bind = bind_params(tape, params);
                Rng drop_rng(train_mode ? dropout_streams[i] : 0);
                WindowForward f =
                    tft_forward(tape, bind, cfg, *windows[i], train_mode, train_mode ? &drop_rng : nullptr);
                Var loss_var = tape.mse(f.pred, windows[i]->target);
                double l = tape.val(loss_var).v[0];
                if (!std::isfinite(l)) tape.check_finite_values();  // throws naming the layer
                tape.backward(loss_var);
                bind.accumulate_grads(tape, grads, 1.0 / n);
                loss += l / n;
            }
            partial_grads[ci] = std::move(grads);
            partial_loss[ci] = loss;
        } catch (const std::exception& e) {
            errors[ci] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

    BatchGrad out;
    out.grads = std::move(partial_grads[0]);
    out.loss = partial_loss[0];
    for (int ci = 1; ci < n_chunks; ++ci) {
        for (size_t p = 0; p < out.grads.items.size(); ++p) {
            Mat& dst = out.grads.items[p].second;
            const Mat& src = partial_grads[ci].items[p].second;
            for (size_t j = 0; j < dst.size(); ++j) dst.v[j] += src.v[j];
        }
        out.loss += partial_loss[ci];
    }
    return out;
}

double eval_mse(const ParamSet& params, const ModelConfig& cfg,
                const std::vector<WindowData>& windows) {
    if (windows.empty()) throw std::invalid_argument("eval_mse: no windows");
    std::vector<double> losses(windows.size(), 0.0);
    std::vector<std::string> errors(windows.size());
    parallel_for(static_cast<int>(windows.size()), [&](int i) {
        try {
            WindowOutput o = eval_window(params, cfg, windows[i]);
            losses[i] = mse_loss(o.pred, windows[i].target);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);
    double s = 0.0;
    for (double l : losses) s += l;
    return s / static_cast<double>(losses.size());
}

AdamState init_adam(const ParamSet& params) {
    AdamState st;
    st.m = params.zeros_like();
    st.v = params.zeros_like();
    st.step = 0;
    return st;
}

double clip_global_norm(ParamSet& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads.items)
        for (double x : g.v) sq += x * x;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (auto& [name, g] : grads.items)
            for (double& x : g.v) x *= s;
    }
    return norm;
}

void adam_step(ParamSet& params, ParamSet grads, AdamState& state, const TrainConfig& cfg) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    clip_global_norm(grads, cfg.grad_clip_norm);
    grads.check_finite();
    ++state.step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    for (size_t p = 0; p < params.items.size(); ++p) {
        Mat& w = params.items[p].second;
        const Mat& g = grads.items[p].second;
        Mat& m = state.m.items[p].second;
        Mat& v = state.v.items[p].second;
        for (size_t j = 0; j < w.size(); ++j) {
            m.v[j] = kBeta1 * m.v[j] + (1.0 - kBeta1) * g.v[j];
            v.v[j] = kBeta2 * v.v[j] + (1.0 - kBeta2) * g.v[j] * g.v[j];
            double mhat = m.v[j] / bc1;
            double vhat = v.v[j] / bc2;
            w.v[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + kEps);
        }
    }
}

TrainResult train(const SplitPanels& splits, const ModelConfig& cfg, const TrainConfig& tcfg,
                  const WindowSpec& wspec) {
    cfg.validate();
    tcfg.validate();
    if (splits.train.T() < wspec.combined())
        throw std::invalid_argument("train: train split too short for one window");

    auto train_refs = make_windows(splits.train, wspec);
    auto val_refs = make_windows(splits.validation, wspec);
    if (train_refs.empty()) throw std::invalid_argument("train: empty train split");
    if (val_refs.empty()) throw std::invalid_argument("train: empty validation split");

    std::vector<WindowData> train_windows(train_refs.size());
    for (size_t i = 0; i < train_refs.size(); ++i)
        train_windows[i] = materialize(splits.train, wspec, train_refs[i]);
    std::vector<WindowData> val_windows(val_refs.size());
    for (size_t i = 0; i < val_refs.size(); ++i)
        val_windows[i] = materialize(splits.validation, wspec, val_refs[i]);

    ParamSet params = init_params(cfg, mix_seed(tcfg.seed, 0x1717));
    AdamState adam = init_adam(params);

    TrainResult result;
    result.config = cfg;
    double best_val = std::numeric_limits<double>::infinity();
    auto t_start = std::chrono::steady_clock::now();

    const int n = static_cast<int>(train_windows.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        auto e_start = std::chrono::steady_clock::now();
        Rng shuffle_rng(mix_seed(tcfg.seed, 0x5f5f, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (int b0 = 0; b0 < n; b0 += tcfg.batch_size) {
            int b1 = std::min(n, b0 + tcfg.batch_size);
            std::vector<const WindowData*> batch;
            std::vector<uint64_t> streams;
            for (int i = b0; i < b1; ++i) {
                batch.push_back(&train_windows[order[i]]);
                streams.push_back(mix_seed(tcfg.seed, static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(order[i])));
            }
            BatchGrad bg = batch_backward(params, cfg, batch, streams, true);
            adam_step(params, std::move(bg.grads), adam, tcfg);
            loss_sum += bg.loss * (b1 - b0);
        }

        double train_loss = loss_sum / n;
        double val_loss = eval_mse(params, cfg, val_windows);
        result.report.train_loss.push_back(train_loss);
        result.report.val_loss.push_back(val_loss);
        result.report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start).count());

        if (val_loss < best_val) {
            best_val = val_loss;
            result.report.best_epoch = epoch;
            result.best_params = params;
        }
        if (epoch - result.report.best_epoch >= tcfg.patience) break;
    }

    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

GridResult grid_search(const GridSpec& grid, const SplitPanels& splits, const ModelConfig& base_cfg,
                       const TrainConfig& base_tcfg, const WindowSpec& wspec) {
    if (grid.learning_rates.empty() || grid.hidden_sizes.empty() || grid.head_counts.empty() ||
        grid.clip_norms.empty())
        throw std::invalid_argument("grid_search: empty grid axis");

    GridResult result;
    double best = std::numeric_limits<double>::infinity();
    for (double lr : grid.learning_rates)
        for (int hidden : grid.hidden_sizes)
            for (int heads : grid.head_counts)
                for (double clip : grid.clip_norms) {
                    GridEntry entry;
                    entry.mcfg = base_cfg;
                    entry.mcfg.d_model = hidden;
                    entry.mcfg.heads = heads;
                    entry.tcfg = base_tcfg;
                    entry.tcfg.learning_rate = lr;
                    entry.tcfg.grad_clip_norm = clip;
                    try {
                        entry.mcfg.validate();
                        TrainResult r = train(splits, entry.mcfg, entry.tcfg, wspec);
                        entry.val_loss = r.report.val_loss[r.report.best_epoch];
                    } catch (const std::exception& e) {
                        entry.val_loss = std::numeric_limits<double>::infinity();
                        entry.error = e.what();
                    }
                    if (entry.val_loss < best) {
                        best = entry.val_loss;
                        result.best_index = static_cast<int>(result.entries.size());
                    }
                    result.entries.push_back(std::move(entry));
                }
    return result;
}

void write_train_log_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,train_loss,val_loss,seconds\n";
    for (size_t i = 0; i < report.train_loss.size(); ++i)
        out << i << "," << fmt_double(report.train_loss[i]) << "," << fmt_double(report.val_loss[i])
            << "," << fmt_double(report.epoch_seconds[i]) << "\n";
}

}  // namespace stsens
