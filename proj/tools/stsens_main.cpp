// stsens: spatio-temporal forecasting with sensitivity and attention
// analysis. Subcommands cover the full workflow:
//   synth -> prepare -> train -> evaluate / attention / morris / grid

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "stsens/attention.hpp"
#include "stsens/checkpoint.hpp"
#include "stsens/csvio.hpp"
#include "stsens/metrics.hpp"
#include "stsens/morris.hpp"
#include "stsens/parallel.hpp"
#include "stsens/runconfig.hpp"
#include "stsens/synthetic.hpp"
#include "stsens/trainer.hpp"

namespace fs = std::filesystem;
using namespace stsens;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "runs";
    int64_t seed_flag = -1;
    std::string split_flag;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
    if (!args.split_flag.empty()) cfg.kv["split.mode"] = args.split_flag;
    return cfg;
}

uint64_t resolve_seed(const CommonArgs& args, const RunConfig& cfg) {
    if (args.seed_flag >= 0) return static_cast<uint64_t>(args.seed_flag);
    return cfg.get_u64("run.seed", 42);
}

std::string start_run(const std::string& command, const CommonArgs& args, RunConfig& cfg,
                      uint64_t seed) {
    cfg.kv["run.seed"] = std::to_string(seed);
    std::string dir = make_run_dir(args.out_dir, command, seed);
    write_manifest(dir, command, cfg, seed);
    return dir;
}

ModelConfig model_config_from(const RunConfig& cfg, const FeaturePanel& panel,
                              const WindowSpec& wspec) {
    return ModelConfig::for_panel(panel, wspec, cfg.get_int("model.d_model", 16),
                                  cfg.get_int("model.heads", 4), cfg.get_double("model.dropout", 0.2));
}

TrainConfig train_config_from(const RunConfig& cfg, uint64_t seed) {
    TrainConfig t;
    t.learning_rate = cfg.get_double("train.learning_rate", 1e-3);
    t.batch_size = cfg.get_int("train.batch_size", 64);
    t.max_epochs = cfg.get_int("train.max_epochs", 100);
    t.patience = cfg.get_int("train.patience", 10);
    t.grad_clip_norm = cfg.get_double("train.grad_clip_norm", 1.0);
    t.seed = seed;
    t.validate();
    return t;
}

Checkpoint checkpoint_from(const RunConfig& cfg, const std::string& key) {
    std::string path = cfg.require(key);
    if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
    return load_checkpoint(path);
}

// default Morris evaluation range: the train range clipped to dates with
// full past context and a full known horizon
DateRange default_eval_range(const FeaturePanel& panel, const SplitSpec& split,
                             const WindowSpec& wspec) {
    Date lo = panel.dates.front() + wspec.past_len;
    Date hi = panel.dates.back() - (wspec.horizon - 1);
    Date start = split.train.start < lo ? lo : split.train.start;
    Date end = split.train.end > hi ? hi : split.train.end;
    if (end < start) throw std::runtime_error("no valid morris evaluation dates in the train range");
    return {start, end};
}

int cmd_synth(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    uint64_t seed = resolve_seed(args, cfg);
    SynthConfig sc = cfg.synth_config(seed);
    FeaturePanel panel = generate_synthetic(sc);

    std::string dir = start_run("synth", args, cfg, seed);
    fs::create_directories(dir + "/dynamic");
    fs::create_directories(dir + "/targets");
    write_static_csv(panel, dir + "/static.csv");
    for (int f = 0; f < panel.n_observed(); ++f)
        write_series_csv(panel, FeatureRole::Observed, f,
                         dir + "/dynamic/" + panel.observed_names[f] + ".csv");
    for (int f = 0; f < panel.n_target(); ++f)
        write_series_csv(panel, FeatureRole::Target, f,
                         dir + "/targets/" + panel.target_names[f] + ".csv");
    std::cout << "counties=" << panel.C() << " days=" << panel.T() << "\n";
    std::cout << dir << "\n";
    return 0;
}

int cmd_prepare(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    uint64_t seed = resolve_seed(args, cfg);
    auto [panel, load_report] =
        load_panel(cfg.require("data.static"), cfg.require("data.dynamic"), cfg.require("data.targets"),
                   parse_date(cfg.require("data.start")), parse_date(cfg.require("data.end")));
    auto [cleaned, clean_report] = clean_outliers(panel, cfg.get_double("prepare.multiplier", 7.5));
    derive_known_future(cleaned);
    SplitSpec split_spec = cfg.split_spec();
    ScalerState scaler =
        fit_scaler(cleaned, split_spec.train.start, split_spec.train.end,
                   "train " + split_spec.train.start.iso() + ".." + split_spec.train.end.iso());
    FeaturePanel scaled = apply_scaler(cleaned, scaler);

    std::string dir = start_run("prepare", args, cfg, seed);
    save_panel_archive(scaled, scaler, dir + "/panel.stp");
    save_panel_archive(cleaned, scaler, dir + "/panel_raw.stp");
    write_clean_report_csv(clean_report, dir + "/clean_report.csv");
    {
        std::ofstream lr(dir + "/load_report.csv");
        lr << "feature,zero_filled\n";
        for (const auto& [name, n] : load_report.zero_fills) lr << name << "," << n << "\n";
    }
    std::cout << "clipped=" << clean_report.total_clipped() << " zero_filled=" << load_report.total_fills()
              << "\n";
    std::cout << dir << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    uint64_t seed = resolve_seed(args, cfg);
    auto [panel, scaler] = load_panel_archive(cfg.require("train.panel"));
    WindowSpec wspec = cfg.window_spec();
    SplitSpec split_spec = cfg.split_spec();
    SplitPanels parts = split(panel, split_spec, wspec);
    ModelConfig mcfg = model_config_from(cfg, panel, wspec);
    TrainConfig tcfg = train_config_from(cfg, seed);

    TrainResult result = train(parts, mcfg, tcfg, wspec);

    Checkpoint ckpt;
    ckpt.config = mcfg;
    ckpt.params = result.best_params;
    ckpt.scaler = scaler;
    ckpt.static_names = panel.static_names;
    ckpt.observed_names = panel.observed_names;
    ckpt.known_names = panel.known_names;
    ckpt.target_names = panel.target_names;

    std::string dir = start_run("train", args, cfg, seed);
    save_checkpoint(ckpt, dir + "/checkpoint.bin");
    write_train_log_csv(result.report, dir + "/epochs.csv");
    std::cout << "best_epoch=" << result.report.best_epoch
              << " val_loss=" << fmt_double(result.report.val_loss[result.report.best_epoch]) << "\n";
    std::cout << dir << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    uint64_t seed = resolve_seed(args, cfg);
    auto [panel, scaler] = load_panel_archive(cfg.require("eval.panel"));
    Checkpoint ckpt = checkpoint_from(cfg, "eval.checkpoint");
    WindowSpec wspec = cfg.window_spec();
    SplitPanels parts = split(panel, cfg.split_spec(), wspec);

    std::vector<MetricsReport> reports;
    reports.push_back(evaluate(ckpt, parts.test, wspec, true));
    reports.push_back(evaluate(ckpt, parts.test, wspec, false));

    std::string dir = start_run("evaluate", args, cfg, seed);
    write_metrics_csv(reports, dir + "/metrics.csv");
    write_metrics_json(reports, dir + "/metrics.json");
    for (const auto& r : reports)
        for (const auto& m : r.per_target)
            std::cout << r.model << " " << m.target << ": mae=" << fmt_double(m.mae)
                      << " rmse=" << fmt_double(m.rmse) << " smape=" << fmt_double(m.smape)
                      << " nnse=" << fmt_double(m.nnse) << "\n";
    std::cout << dir << "\n";
    return 0;
}

int cmd_attention(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    uint64_t seed = resolve_seed(args, cfg);
    auto [panel, scaler] = load_panel_archive(cfg.require("attention.panel"));
    Checkpoint ckpt = checkpoint_from(cfg, "attention.checkpoint");
    WindowSpec wspec = cfg.window_spec();
    SplitPanels parts = split(panel, cfg.split_spec(), wspec);
    const FeaturePanel& train_panel = parts.train;

    auto refs = make_windows(train_panel, wspec);
    AttentionAggregator attn_agg;
    DailyAttentionAggregator daily_agg;
    ImportanceAggregator imp_agg;

    // batched evaluation: parallel forward into slots, ordered aggregation
    const int batch = 256;
    std::vector<WindowOutput> slots;
    for (size_t b0 = 0; b0 < refs.size(); b0 += batch) {
        size_t b1 = std::min(refs.size(), b0 + batch);
        slots.assign(b1 - b0, WindowOutput{});
        std::vector<std::string> errors(b1 - b0);
        parallel_for(static_cast<int>(b1 - b0), [&](int i) {
            try {
                WindowData w = materialize(train_panel, wspec, refs[b0 + i]);
                slots[i] = eval_window(ckpt.params, ckpt.config, w);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });
        for (const auto& e : errors)
            if (!e.empty()) throw std::runtime_error(e);
        for (size_t i = 0; i < slots.size(); ++i) {
            const WindowRef& ref = refs[b0 + i];
            Date pred_start = train_panel.dates[ref.start_t + wspec.past_len];
            attn_agg.add_window(slots[i].attention);
            daily_agg.add_window(pred_start, slots[i].attention, wspec.past_len);
            imp_agg.add_window(slots[i]);
        }
    }

    Mat mean = attn_agg.mean();
    auto profile = lag_profile(mean, wspec.past_len);
    auto daily = daily_agg.series();

    // mean observed target per date in raw units (min-max is affine, so the
    // mean commutes with unscaling)
    std::vector<double> observed;
    const std::string& tgt0 = train_panel.target_names[0];
    for (const auto& [date, attn, count] : daily) {
        int t = train_panel.date_index(date);
        double s = 0;
        for (int c = 0; c < train_panel.C(); ++c) s += train_panel.tgt(c, t, 0);
        observed.push_back(scaler.unscale_value(tgt0, s / train_panel.C()));
    }

    ImportanceTable table = imp_agg.finalize(train_panel.static_names, past_input_names(train_panel),
                                             train_panel.known_names);

    std::string dir = start_run("attention", args, cfg, seed);
    write_attention_mean_csv(mean, dir + "/attention_mean.csv");
    write_lag_profile_csv(profile, dir + "/lag_profile.csv");
    write_daily_attention_csv(daily, observed, dir + "/daily_attention.csv");
    write_importance_csv(table, dir + "/importance.csv");
    int argmax = 0;
    for (size_t j = 1; j + 1 < profile.size(); ++j)  // lags -13..-2
        if (profile[j] > profile[argmax]) argmax = static_cast<int>(j);
    std::cout << "windows=" << attn_agg.windows() << " peak_lag=" << (argmax - wspec.past_len) << "\n";
    std::cout << dir << "\n";
    return 0;
}

int cmd_morris(const CommonArgs& args, const std::vector<double>& delta_flag,
               const std::string& feature_flag) {
    RunConfig cfg = load_config(args);
    if (!delta_flag.empty()) {
        std::string joined;
        for (double d : delta_flag) joined += (joined.empty() ? "" : ",") + fmt_double(d);
        cfg.kv["morris.deltas"] = joined;
    }
    if (!feature_flag.empty()) cfg.kv["morris.features"] = feature_flag;
    uint64_t seed = resolve_seed(args, cfg);

    auto [panel, scaler] = load_panel_archive(cfg.require("morris.panel"));
    Checkpoint ckpt = checkpoint_from(cfg, "morris.checkpoint");
    WindowSpec wspec = cfg.window_spec();
    SplitSpec split_spec = cfg.split_spec();

    DateRange eval = default_eval_range(panel, split_spec, wspec);
    eval.start = cfg.get_date("morris.start", eval.start);
    eval.end = cfg.get_date("morris.end", eval.end);

    std::vector<std::string> features = cfg.get_str_list("morris.features");
    if (features.empty()) features = panel.observed_names;
    std::vector<double> deltas = cfg.get_double_list("morris.deltas", {0.005});
    std::string target = cfg.get("morris.target", panel.target_names.empty() ? "cases"
                                                                             : panel.target_names[0]);

    TftPredictor predictor(ckpt, wspec, target);
    std::vector<MorrisResult> results;
    for (const auto& feature : features) {
        MorrisConfig mc;
        mc.feature = feature;
        mc.deltas = deltas;
        mc.eval_start = eval.start;
        mc.eval_end = eval.end;
        double sigma = raw_feature_std(panel, scaler, feature, eval.start, eval.end);
        results.push_back(normalized_morris(predictor, panel, mc, sigma));
    }

    std::string dir = start_run("morris", args, cfg, seed);
    write_morris_csv(results, dir + "/morris.csv");
    for (const auto& r : results)
        for (const auto& row : r.rows)
            std::cout << r.feature << " delta=" << fmt_double(row.delta)
                      << " mu_star=" << fmt_double(row.mu_star)
                      << " scaled=" << fmt_double(row.scaled_index) << "\n";

    // optional Table-IX style subgroup experiment on the unscaled panel
    auto subgroups = cfg.get_str_list("morris.subgroups");
    if (!subgroups.empty()) {
        auto [raw_panel, raw_scaler] = load_panel_archive(cfg.require("morris.raw_panel"));
        SubgroupExperimentConfig sgc;
        sgc.subgroup_columns = subgroups;
        sgc.dynamic_feature = cfg.get("morris.subgroup_dynamic", panel.observed_names.at(0));
        sgc.deltas = deltas;
        sgc.split = split_spec;
        sgc.wspec = wspec;
        sgc.base_model.d_model = cfg.get_int("model.d_model", 16);
        sgc.base_model.heads = cfg.get_int("model.heads", 4);
        sgc.base_model.dropout = cfg.get_double("model.dropout", 0.2);
        sgc.tcfg = train_config_from(cfg, seed);
        sgc.eval = eval;
        auto rows = subgroup_experiment(raw_panel, sgc);
        write_subgroup_csv(rows, dir + "/subgroups.csv");
        for (const auto& row : rows)
            std::cout << "subgroup " << row.subgroup << ": loss=" << fmt_double(row.training_loss)
                      << " index=" << fmt_double(row.subgroup_scaled_index)
                      << (row.error.empty() ? "" : " error=" + row.error) << "\n";
    }
    std::cout << dir << "\n";
    return 0;
}

int cmd_grid(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    uint64_t seed = resolve_seed(args, cfg);
    auto [panel, scaler] = load_panel_archive(cfg.require("train.panel"));
    WindowSpec wspec = cfg.window_spec();
    SplitPanels parts = split(panel, cfg.split_spec(), wspec);
    ModelConfig base_cfg = model_config_from(cfg, panel, wspec);
    TrainConfig base_tcfg = train_config_from(cfg, seed);

    GridSpec grid;
    grid.learning_rates = cfg.get_double_list("grid.learning_rates", {1e-3, 1e-4});
    grid.hidden_sizes = cfg.get_int_list("grid.hidden_sizes", {16, 32, 64});
    grid.head_counts = cfg.get_int_list("grid.head_counts", {1, 4});
    grid.clip_norms = cfg.get_double_list("grid.clip_norms", {0.01, 1.0});

    GridResult result = grid_search(grid, parts, base_cfg, base_tcfg, wspec);

    std::string dir = start_run("grid", args, cfg, seed);
    std::ofstream out(dir + "/grid.csv");
    out << "learning_rate,hidden_size,heads,clip_norm,val_loss,best,error\n";
    for (size_t i = 0; i < result.entries.size(); ++i) {
        const GridEntry& e = result.entries[i];
        out << fmt_double(e.tcfg.learning_rate) << "," << e.mcfg.d_model << "," << e.mcfg.heads << ","
            << fmt_double(e.tcfg.grad_clip_norm) << "," << fmt_double(e.val_loss) << ","
            << (static_cast<int>(i) == result.best_index ? 1 : 0) << "," << e.error << "\n";
    }
    const GridEntry& best = result.entries[result.best_index];
    std::cout << "best: lr=" << fmt_double(best.tcfg.learning_rate) << " hidden=" << best.mcfg.d_model
              << " heads=" << best.mcfg.heads << " clip=" << fmt_double(best.tcfg.grad_clip_norm)
              << " val_loss=" << fmt_double(best.val_loss) << "\n";
    std::cout << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    init_threads_from_env();

    CLI::App app{"county-level spatio-temporal forecasting with Morris sensitivity analysis"};
    app.require_subcommand(1);

    CommonArgs common;
    std::vector<double> delta_flag;
    std::string feature_flag;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", common.config_path, "run configuration file");
        if (config_required) opt->required();
        sub->add_option("--seed", common.seed_flag, "seed override");
        sub->add_option("--out", common.out_dir, "parent directory for run outputs");
        sub->add_option("--split", common.split_flag, "split mode override: primary|custom")
            ->check(CLI::IsMember({"primary", "custom"}));
    };

    add_common(app.add_subcommand("synth", "generate a synthetic panel as CSV files"), false);
    add_common(app.add_subcommand("prepare", "clean, derive calendar features, scale, archive"), true);
    add_common(app.add_subcommand("train", "train the forecaster on a prepared panel"), true);
    add_common(app.add_subcommand("evaluate", "metrics for the model and the persistence baseline"),
               true);
    add_common(app.add_subcommand("attention", "attention patterns and variable importance"), true);
    auto* morris = app.add_subcommand("morris", "normalized Morris sensitivity indices");
    add_common(morris, true);
    morris->add_option("--delta", delta_flag, "delta sweep override")->delimiter(',');
    morris->add_option("--feature", feature_flag, "feature selection override");
    add_common(app.add_subcommand("grid", "hyperparameter grid search"), true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.get_subcommand("synth")->parsed()) return cmd_synth(common);
        if (app.get_subcommand("prepare")->parsed()) return cmd_prepare(common);
        if (app.get_subcommand("train")->parsed()) return cmd_train(common);
        if (app.get_subcommand("evaluate")->parsed()) return cmd_evaluate(common);
        if (app.get_subcommand("attention")->parsed()) return cmd_attention(common);
        if (app.get_subcommand("morris")->parsed()) return cmd_morris(common, delta_flag, feature_flag);
        if (app.get_subcommand("grid")->parsed()) return cmd_grid(common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
