#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "stsens/metrics.hpp"
#include "stsens/rng.hpp"
#include "test_util.hpp"

using namespace stsens;
using namespace testutil;

TEST_CASE("mae and rmse: examples") {
    std::vector<double> obs = {3, 4};
    CHECK(mae(obs, obs) == 0.0);
    CHECK(rmse(obs, obs) == 0.0);
    CHECK(mae({0, 0}, obs) == doctest::Approx(3.5));
    CHECK(rmse({0, 0}, obs) == doctest::Approx(std::sqrt(12.5)));
    // constant offset
    std::vector<double> shifted = {5, 6};
    CHECK(mae(shifted, obs) == doctest::Approx(2.0));
    CHECK(rmse(shifted, obs) == doctest::Approx(2.0));
    CHECK_THROWS(mae({1}, obs));
}

TEST_CASE("smape: examples, symmetry, range") {
    CHECK(smape({100}, {100}) == 0.0);
    CHECK(smape({50}, {100}) == doctest::Approx(2.0 * 50 / 150));
    CHECK(smape({0}, {0}) == 0.0);  // both-zero convention
    Rng rng(4);
    for (int it = 0; it < 1000; ++it) {
        int n = 1 + static_cast<int>(rng.next_below(20));
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = rng.uniform(-10, 10);
            b[i] = rng.next_below(5) == 0 ? 0.0 : rng.uniform(-10, 10);
        }
        double s1 = smape(a, b), s2 = smape(b, a);
        CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
        CHECK(s1 >= 0.0);
        CHECK(s1 <= 2.0);
    }
}

TEST_CASE("nnse anchors") {
    std::vector<double> obs = {1, 2, 3, 4, 7};
    auto [nse_perfect, nnse_perfect] = nnse(obs, obs);
    CHECK(nnse_perfect == 1.0);

    double mean = 0;
    for (double y : obs) mean += y;
    mean /= obs.size();
    std::vector<double> mean_pred(obs.size(), mean);
    auto [nse0, nnse0] = nnse(mean_pred, obs);
    CHECK(std::abs(nse0) <= 1e-12);
    CHECK(std::abs(nnse0 - 0.5) <= 1e-12);

    std::vector<double> awful = {1e6, -1e6, 1e6, -1e6, 1e6};
    auto [nse_bad, nnse_bad] = nnse(awful, obs);
    CHECK(nse_bad < 0.0);
    CHECK(nnse_bad > 0.0);
    CHECK(nnse_bad < 0.5);

    CHECK_THROWS(nnse({1, 1}, {5, 5}));  // zero observation variance
}

TEST_CASE("rmse >= mae on random vectors; nnse strictly increasing in nse") {
    Rng rng(11);
    for (int it = 0; it < 1000; ++it) {
        int n = 2 + static_cast<int>(rng.next_below(30));
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = rng.uniform(-100, 100);
            b[i] = rng.uniform(-100, 100);
        }
        CHECK(rmse(a, b) >= mae(a, b) - 1e-12);
    }
    double prev = 0.0;
    for (double nse = -50; nse <= 1.0; nse += 0.25) {
        double v = 1.0 / (2.0 - nse);
        if (nse > -50) CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("persistence forecast repeats the last observation") {
    Mat past(3, 2);
    past.v = {1, 9, 2, 8, 12, 7};
    Mat fc = persistence_forecast(past, 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(fc(i, 0) == 12.0);
        CHECK(fc(i, 1) == 7.0);
    }
    // strictly rising series is underpredicted at every step
    std::vector<double> rising = {13, 14, 15, 16};
    for (double y : rising) CHECK(fc(0, 0) < y);
}

TEST_CASE("evaluate matches a straight-line metric recomputation (baseline)") {
    SynthConfig sc;
    sc.counties = 3;
    sc.days = 30;
    sc.seed = 21;
    FeaturePanel raw = generate_synthetic(sc);
    ScalerState scaler = fit_scaler(raw, raw.dates.front(), raw.dates.back(), "train");
    FeaturePanel scaled = apply_scaler(raw, scaler);
    WindowSpec wspec;
    wspec.past_len = 5;
    wspec.horizon = 3;

    Checkpoint ckpt;
    ckpt.config = ModelConfig::for_panel(scaled, wspec, 8, 2, 0.0);
    ckpt.params = init_params(ckpt.config, 2);
    ckpt.scaler = scaler;
    ckpt.target_names = scaled.target_names;

    MetricsReport rep = evaluate(ckpt, scaled, wspec, false);
    REQUIRE(rep.per_target.size() == 2);

    // independent recomputation straight from the raw panel
    for (int f = 0; f < 2; ++f) {
        std::vector<double> p, o;
        for (int c = 0; c < raw.C(); ++c)
            for (int s = 0; s + wspec.combined() <= raw.T(); ++s) {
                double last = raw.tgt(c, s + wspec.past_len - 1, f);
                for (int h = 0; h < wspec.horizon; ++h) {
                    p.push_back(last);
                    o.push_back(raw.tgt(c, s + wspec.past_len + h, f));
                }
            }
        double m = 0, r = 0, s2 = 0;
        for (size_t i = 0; i < p.size(); ++i) {
            m += std::abs(p[i] - o[i]);
            r += (p[i] - o[i]) * (p[i] - o[i]);
            double denom = std::abs(p[i]) + std::abs(o[i]);
            if (denom > 0) s2 += 2.0 * std::abs(p[i] - o[i]) / denom;
        }
        m /= p.size();
        r = std::sqrt(r / p.size());
        s2 /= p.size();
        CHECK(rep.per_target[f].mae == doctest::Approx(m).epsilon(1e-9));
        CHECK(rep.per_target[f].rmse == doctest::Approx(r).epsilon(1e-9));
        CHECK(rep.per_target[f].smape == doctest::Approx(s2).epsilon(1e-9));
    }
}

TEST_CASE("baseline on per-county-constant targets is a perfect forecaster") {
    SynthConfig sc;
    sc.counties = 3;
    sc.days = 20;
    sc.seed = 33;
    sc.noise_std = 0.0;
    sc.weekly_amplitude = 0.0;
    sc.feature_coeffs = {};
    FeaturePanel raw = generate_synthetic(sc);  // targets constant per county
    ScalerState scaler = fit_scaler(raw, raw.dates.front(), raw.dates.back(), "train");
    FeaturePanel scaled = apply_scaler(raw, scaler);
    WindowSpec wspec;
    wspec.past_len = 4;
    wspec.horizon = 2;

    Checkpoint ckpt;
    ckpt.config = ModelConfig::for_panel(scaled, wspec, 8, 2, 0.0);
    ckpt.params = init_params(ckpt.config, 2);
    ckpt.scaler = scaler;
    ckpt.target_names = scaled.target_names;

    MetricsReport rep = evaluate(ckpt, scaled, wspec, false);
    for (const auto& m : rep.per_target) {
        CHECK(m.mae == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(m.rmse == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(m.smape == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(m.nnse == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("evaluate is deterministic") {
    SynthConfig sc;
    sc.counties = 2;
    sc.days = 25;
    sc.seed = 8;
    FeaturePanel raw = generate_synthetic(sc);
    ScalerState scaler = fit_scaler(raw, raw.dates.front(), raw.dates.back(), "train");
    FeaturePanel scaled = apply_scaler(raw, scaler);
    WindowSpec wspec;
    wspec.past_len = 5;
    wspec.horizon = 3;
    Checkpoint ckpt;
    ckpt.config = ModelConfig::for_panel(scaled, wspec, 8, 2, 0.0);
    ckpt.params = init_params(ckpt.config, 3);
    ckpt.scaler = scaler;
    ckpt.target_names = scaled.target_names;

    MetricsReport a = evaluate(ckpt, scaled, wspec, true);
    MetricsReport b = evaluate(ckpt, scaled, wspec, true);
    for (size_t i = 0; i < a.per_target.size(); ++i) {
        CHECK(a.per_target[i].mae == b.per_target[i].mae);
        CHECK(a.per_target[i].nnse == b.per_target[i].nnse);
    }
}
