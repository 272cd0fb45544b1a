#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "stsens/checkpoint.hpp"
#include "stsens/model.hpp"
#include "test_util.hpp"

using namespace stsens;
using namespace testutil;
namespace fs = std::filesystem;

TEST_CASE("model config validation") {
    ModelConfig cfg;
    cfg.n_static = 1;
    cfg.n_past = 2;
    cfg.n_future = 1;
    cfg.n_target = 1;
    CHECK_NOTHROW(cfg.validate());
    cfg.heads = 3;  // 16 % 3 != 0
    CHECK_THROWS(cfg.validate());
    cfg.heads = 4;
    cfg.dropout = 1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("interpretable attention matches the brute-force evaluation") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const int d_s = 4, d_model = 4, heads = 2;
        ModelConfig cfg;
        cfg.d_model = d_model;
        cfg.heads = heads;
        cfg.n_static = 1;
        cfg.n_past = 2;
        cfg.n_future = 1;
        cfg.n_target = 1;
        cfg.past_len = 2;
        cfg.horizon = 2;
        ParamSet params = init_params(cfg, 100 + trial);

        Mat q = random_mat(rng, d_s, d_model), k = random_mat(rng, d_s, d_model),
            v = random_mat(rng, d_s, d_model);
        Tape t;
        t.recording = false;
        TapeBinding P = bind_params(t, params);
        MhaOut out = interpretable_mha(t, P, t.leaf(q), t.leaf(k), t.leaf(v), causal_mask(d_s));

        std::vector<Mat> wq = {params.at("attn.wq0"), params.at("attn.wq1")};
        std::vector<Mat> wk = {params.at("attn.wk0"), params.at("attn.wk1")};
        ManualMha manual = manual_mha(q, k, v, wq, wk, params.at("attn.wv"), params.at("attn.wh"));

        for (size_t i = 0; i < manual.output.size(); ++i)
            CHECK(std::abs(t.val(out.output).v[i] - manual.output.v[i]) < 1e-6);
        for (int h = 0; h < heads; ++h)
            for (size_t i = 0; i < manual.heads[h].size(); ++i)
                CHECK(std::abs(t.val(out.head_attention[h]).v[i] - manual.heads[h].v[i]) < 1e-9);
    }
}

TEST_CASE("single head reduces to plain attention with the shared value projection") {
    Rng rng(3);
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 1;
    cfg.n_static = 1;
    cfg.n_past = 2;
    cfg.n_future = 1;
    cfg.n_target = 1;
    cfg.past_len = 3;
    cfg.horizon = 2;
    ParamSet params = init_params(cfg, 7);
    Mat x = random_mat(rng, 5, 8);
    Tape t;
    t.recording = false;
    TapeBinding P = bind_params(t, params);
    MhaOut out = interpretable_mha(t, P, t.leaf(x), t.leaf(x), t.leaf(x), causal_mask(5));
    ManualMha manual = manual_mha(x, x, x, {params.at("attn.wq0")}, {params.at("attn.wk0")},
                                  params.at("attn.wv"), params.at("attn.wh"));
    for (size_t i = 0; i < manual.output.size(); ++i)
        CHECK(t.val(out.output).v[i] == doctest::Approx(manual.output.v[i]).epsilon(1e-10));
}

TEST_CASE("equal query/key rows give uniform attention over unmasked positions") {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.n_static = 1;
    cfg.n_past = 2;
    cfg.n_future = 1;
    cfg.n_target = 1;
    cfg.past_len = 3;
    cfg.horizon = 2;
    ParamSet params = init_params(cfg, 9);
    Mat x(5, 8);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j) x(i, j) = 0.3 * j;  // identical rows
    Tape t;
    t.recording = false;
    TapeBinding P = bind_params(t, params);
    MhaOut out = interpretable_mha(t, P, t.leaf(x), t.leaf(x), t.leaf(x), causal_mask(5));
    for (const Var& av : out.head_attention) {
        const Mat& a = t.val(av);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j <= i; ++j) CHECK(a(i, j) == doctest::Approx(1.0 / (i + 1)).epsilon(1e-12));
    }
}

TEST_CASE("non-causal mask is rejected") {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.n_static = 1;
    cfg.n_past = 2;
    cfg.n_future = 1;
    cfg.n_target = 1;
    cfg.past_len = 3;
    cfg.horizon = 2;
    ParamSet params = init_params(cfg, 11);
    Tape t;
    TapeBinding P = bind_params(t, params);
    Var x = t.leaf(Mat(4, 8, 0.5));
    Mat bad = causal_mask(4);
    bad(0, 3) = 1.0;  // peeks into the future
    CHECK_THROWS(interpretable_mha(t, P, x, x, x, bad));
    Mat missing = causal_mask(4);
    missing(2, 1) = 0.0;  // blocks an allowed position
    CHECK_THROWS(interpretable_mha(t, P, x, x, x, missing));
}

TEST_CASE("forward: shapes, attention invariants, simplex weights, shared-value identity") {
    TinyModel tm = make_tiny_model(55);
    const WindowData& w = tm.windows[0];
    Tape t;
    t.recording = false;
    TapeBinding P = bind_params(t, tm.params);
    WindowForward f = tft_forward(t, P, tm.cfg, w, false, nullptr);

    CHECK(t.val(f.pred).rows == tm.cfg.horizon);
    CHECK(t.val(f.pred).cols == tm.cfg.n_target);

    for (const Var& av : f.head_attention) verify_attention_invariants(t.val(av));

    auto check_simplex = [&](const Mat& weights) {
        for (int i = 0; i < weights.rows; ++i) {
            double s = 0;
            for (int j = 0; j < weights.cols; ++j) {
                CHECK(weights(i, j) >= 0.0);
                s += weights(i, j);
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
    };
    check_simplex(t.val(f.vsn_static_weights));
    check_simplex(t.val(f.vsn_past_weights));
    check_simplex(t.val(f.vsn_future_weights));

    // single static feature would get weight exactly 1 (softmax of singleton)
    FeaturePanel single = tm.panel;
    single.static_names = {"only"};
    single.statics.assign(single.C(), 0.4);
    ModelConfig cfg1 = ModelConfig::for_panel(single, tm.wspec, 8, 2, 0.0);
    ParamSet params1 = init_params(cfg1, 5);
    WindowOutput o1 =
        eval_window(params1, cfg1, materialize(single, tm.wspec, make_windows(single, tm.wspec)[0]));
    CHECK(o1.vsn_static_weights.size() == 1);
    CHECK(o1.vsn_static_weights.v[0] == 1.0);
}

TEST_CASE("shared-value property: per-head attention plus shared VWv reproduce the output") {
    TinyModel tm = make_tiny_model(66);
    Rng rng(2);
    Mat theta = random_mat(rng, tm.cfg.combined(), tm.cfg.d_model);
    Tape t;
    t.recording = false;
    TapeBinding P = bind_params(t, tm.params);
    MhaOut out =
        interpretable_mha(t, P, t.leaf(theta), t.leaf(theta), t.leaf(theta), causal_mask(theta.rows));

    // recompute from the exposed pieces: mean(A_h) * (V Wv) * Wh
    Mat mean(theta.rows, theta.rows, 0.0);
    for (const Var& av : out.head_attention)
        for (size_t i = 0; i < mean.size(); ++i) mean.v[i] += t.val(av).v[i] / tm.cfg.heads;
    Mat recomputed =
        manual_matmul(manual_matmul(mean, manual_matmul(theta, tm.params.at("attn.wv"))),
                      tm.params.at("attn.wh"));
    for (size_t i = 0; i < recomputed.size(); ++i)
        CHECK(std::abs(recomputed.v[i] - t.val(out.output).v[i]) < 1e-6);
}

TEST_CASE("eval forward is deterministic; train mode reproducible under a fixed seed") {
    TinyModel tm = make_tiny_model(88);
    const WindowData& w = tm.windows[1];
    WindowOutput a = eval_window(tm.params, tm.cfg, w);
    WindowOutput b = eval_window(tm.params, tm.cfg, w);
    CHECK(a.pred.v == b.pred.v);

    auto train_pred = [&](uint64_t stream) {
        Tape t;
        t.recording = false;
        TapeBinding P = bind_params(t, tm.params);
        Rng rng(stream);
        WindowForward f = tft_forward(t, P, tm.cfg, w, true, &rng);
        return t.val(f.pred);
    };
    CHECK(train_pred(5).v == train_pred(5).v);
    CHECK(train_pred(5).v != train_pred(6).v);
}

TEST_CASE("window order does not leak across windows") {
    TinyModel tm = make_tiny_model(13);
    WindowOutput alone = eval_window(tm.params, tm.cfg, tm.windows[3]);
    // same window evaluated "within" a permuted batch is identical
    std::vector<WindowData> shuffled = {tm.windows[5], tm.windows[3], tm.windows[0]};
    WindowOutput inside = eval_window(tm.params, tm.cfg, shuffled[1]);
    CHECK(alone.pred.v == inside.pred.v);
    for (size_t h = 0; h < alone.attention.size(); ++h)
        CHECK(alone.attention[h].v == inside.attention[h].v);
}

TEST_CASE("causality: perturbing a later future input leaves earlier attention rows alone") {
    TinyModel tm = make_tiny_model(29);
    WindowData w = tm.windows[0];
    WindowOutput base = eval_window(tm.params, tm.cfg, w);

    WindowData moved = w;
    const int last = tm.cfg.horizon - 1;  // last future position
    for (int f = 0; f < moved.future.cols; ++f) moved.future(last, f) += 0.37;
    WindowOutput shifted = eval_window(tm.params, tm.cfg, moved);

    const int changed_pos = tm.cfg.past_len + last;
    for (size_t h = 0; h < base.attention.size(); ++h)
        for (int i = 0; i < changed_pos; ++i)
            for (int j = 0; j < base.attention[h].cols; ++j)
                CHECK(base.attention[h](i, j) == shifted.attention[h](i, j));
    // predictions at earlier horizon steps are untouched as well
    for (int i = 0; i < last; ++i)
        for (int f = 0; f < base.pred.cols; ++f) CHECK(base.pred(i, f) == shifted.pred(i, f));
}

TEST_CASE("config/batch mismatch is rejected") {
    TinyModel tm = make_tiny_model(31);
    WindowData w = tm.windows[0];
    w.past = Mat(tm.cfg.past_len, tm.cfg.n_past + 1);
    Tape t;
    TapeBinding P = bind_params(t, tm.params);
    CHECK_THROWS(tft_forward(t, P, tm.cfg, w, false, nullptr));
}

TEST_CASE("checkpoint: exact round trip, corruption, stored config wins") {
    TinyModel tm = make_tiny_model(41);
    Checkpoint ckpt;
    ckpt.config = tm.cfg;
    ckpt.params = tm.params;
    ckpt.scaler.fitted_on = "train";
    ckpt.scaler.ranges["cases"] = {0.0, 10.0};
    ckpt.static_names = tm.panel.static_names;
    ckpt.observed_names = tm.panel.observed_names;
    ckpt.known_names = tm.panel.known_names;
    ckpt.target_names = tm.panel.target_names;

    fs::path path = fs::temp_directory_path() / "stsens_ckpt_test.bin";
    save_checkpoint(ckpt, path.string());
    Checkpoint loaded = load_checkpoint(path.string());

    // bit-identical parameters -> bit-identical forward
    WindowOutput a = eval_window(ckpt.params, ckpt.config, tm.windows[0]);
    WindowOutput b = eval_window(loaded.params, loaded.config, tm.windows[0]);
    CHECK(a.pred.v == b.pred.v);
    for (size_t p = 0; p < ckpt.params.items.size(); ++p) {
        CHECK(loaded.params.items[p].first == ckpt.params.items[p].first);
        CHECK(loaded.params.items[p].second.v == ckpt.params.items[p].second.v);
    }
    // the stored config is authoritative regardless of what the caller wanted
    CHECK(loaded.config.d_model == tm.cfg.d_model);
    CHECK(loaded.scaler.ranges.at("cases") == std::pair<double, double>{0.0, 10.0});

    // truncation must raise a clean error
    auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);

    std::ofstream bad(path);
    bad << "not a checkpoint";
    bad.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("magic"),
                         std::runtime_error);
    fs::remove(path);
}
