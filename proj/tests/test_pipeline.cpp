#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stsens/csvio.hpp"
#include "stsens/panel.hpp"
#include "stsens/rng.hpp"
#include "stsens/synthetic.hpp"
#include "stsens/windows.hpp"

using namespace stsens;
namespace fs = std::filesystem;

namespace {

// Independent quantile oracle: plain sort plus interpolation between order
// statistics, written separately from the library path.
double oracle_quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    size_t n = xs.size();
    if (n == 1) return xs[0];
    double pos = q * static_cast<double>(n - 1);
    size_t lo = static_cast<size_t>(std::floor(pos));
    size_t hi = lo + 1 < n ? lo + 1 : lo;
    double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * xs[lo] + frac * xs[hi];
}

FeaturePanel tiny_panel(int C, int T, uint64_t seed = 3, double noise = 1.0) {
    SynthConfig cfg;
    cfg.counties = C;
    cfg.days = T;
    cfg.seed = seed;
    cfg.noise_std = noise;
    return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("outlier bounds: constant series collapses to the constant") {
    auto b = compute_outlier_bounds({5, 5, 5, 5}, 7.5);
    CHECK(b.iqr == 0.0);
    CHECK(b.lower == 5.0);
    CHECK(b.upper == 5.0);
}

TEST_CASE("outlier bounds match the sort-based oracle on 0..99") {
    std::vector<double> xs(100);
    for (int i = 0; i < 100; ++i) xs[i] = i;
    auto b = compute_outlier_bounds(xs, 7.5);
    double q1 = oracle_quantile(xs, 0.25);
    double q3 = oracle_quantile(xs, 0.75);
    CHECK(b.q1 == doctest::Approx(q1).epsilon(1e-12));
    CHECK(b.q3 == doctest::Approx(q3).epsilon(1e-12));
    CHECK(b.lower == doctest::Approx(q1 - 7.5 * (q3 - q1)).epsilon(1e-12));
    CHECK(b.upper == doctest::Approx(q3 + 7.5 * (q3 - q1)).epsilon(1e-12));
}

TEST_CASE("outlier flagging of a spike follows the oracle bound") {
    std::vector<double> xs = {1, 2, 3, 1000};
    auto b = compute_outlier_bounds(xs, 7.5);
    double upper = oracle_quantile(xs, 0.75) + 7.5 * (oracle_quantile(xs, 0.75) - oracle_quantile(xs, 0.25));
    CHECK(b.upper == doctest::Approx(upper).epsilon(1e-12));
    CHECK((1000.0 > b.upper) == (1000.0 > upper));
}

TEST_CASE("outlier bounds vs oracle on 1000 random series") {
    Rng rng(99);
    for (int it = 0; it < 1000; ++it) {
        size_t n = 1 + rng.next_below(200);
        std::vector<double> xs(n);
        for (auto& x : xs) x = rng.uniform(-50, 50);
        if (rng.next_below(4) == 0) xs[rng.next_below(n)] *= 100.0;  // occasional spike
        auto b = compute_outlier_bounds(xs, 7.5);
        double q1 = oracle_quantile(xs, 0.25), q3 = oracle_quantile(xs, 0.75);
        CHECK(std::abs(b.q1 - q1) <= 1e-9 * (1.0 + std::abs(q1)));
        CHECK(std::abs(b.q3 - q3) <= 1e-9 * (1.0 + std::abs(q3)));
    }
}

TEST_CASE("empty series is rejected") {
    CHECK_THROWS(compute_outlier_bounds({}, 7.5));
}

TEST_CASE("clean_outliers: no outliers is a fixed point, spike gets clipped") {
    FeaturePanel p = tiny_panel(3, 30, 11, 0.5);
    auto [cleaned, report] = clean_outliers(p, 7.5);
    // multiplier 7.5 is generous; this panel should be untouched
    CHECK(report.total_clipped() == 0);
    CHECK(cleaned.targets == p.targets);

    // inject a spike far above the upper bound
    FeaturePanel spiked = p;
    auto bounds = compute_outlier_bounds(
        std::vector<double>(p.targets.begin(), p.targets.end()), 7.5);
    spiked.tgt(0, 5, 0) = 10.0 * (std::abs(bounds.upper) + 100.0);
    auto [cleaned2, report2] = clean_outliers(spiked, 7.5);
    long clipped_cases = 0;
    for (const auto& f : report2.features)
        if (f.name == "cases") clipped_cases = f.clipped;
    CHECK(clipped_cases == 1);
    CHECK(cleaned2.tgt(0, 5, 0) < spiked.tgt(0, 5, 0));
}

TEST_CASE("clean_outliers is idempotent and never increases std") {
    Rng rng(7);
    for (int it = 0; it < 5; ++it) {
        FeaturePanel p = tiny_panel(4, 40, 100 + it, 8.0);
        // heavy-tailed contamination
        for (int k = 0; k < 6; ++k)
            p.tgt(static_cast<int>(rng.next_below(4)), static_cast<int>(rng.next_below(40)), 0) *= 50.0;
        auto [c1, r1] = clean_outliers(p, 2.0);
        auto [c2, r2] = clean_outliers(c1, 2.0);
        CHECK(c2.targets == c1.targets);
        CHECK(c2.observed == c1.observed);
        for (size_t i = 0; i < r1.features.size(); ++i)
            CHECK(r1.features[i].std_after <= r1.features[i].std_before + 1e-12);
    }
}

TEST_CASE("scaler: definition, degenerate feature, round trip") {
    FeaturePanel p;
    p.county_ids = {"a"};
    p.dates = {Date::from_ymd(2020, 1, 1), Date::from_ymd(2020, 1, 2), Date::from_ymd(2020, 1, 3)};
    p.observed_names = {"x", "flat"};
    p.observed = {2, 7, 4, 7, 6, 7};
    p.target_names = {"y"};
    p.targets = {1, 2, 3};
    derive_known_future(p);
    p.validate();

    ScalerState s = fit_scaler(p, p.dates.front(), p.dates.back(), "train");
    FeaturePanel scaled = apply_scaler(p, s);
    CHECK(scaled.obs(0, 0, 0) == doctest::Approx(0.0));
    CHECK(scaled.obs(0, 1, 0) == doctest::Approx(0.5));
    CHECK(scaled.obs(0, 2, 0) == doctest::Approx(1.0));
    for (int t = 0; t < 3; ++t) CHECK(scaled.obs(0, t, 1) == 0.0);  // constant feature -> 0

    // round trip on a random panel
    FeaturePanel r = tiny_panel(3, 25, 17);
    ScalerState rs = fit_scaler(r, r.dates.front(), r.dates.back(), "train");
    FeaturePanel rscaled = apply_scaler(r, rs);
    double max_err = 0.0;
    for (int c = 0; c < r.C(); ++c)
        for (int t = 0; t < r.T(); ++t)
            for (int f = 0; f < r.n_observed(); ++f) {
                double back = rs.unscale_value(r.observed_names[f], rscaled.obs(c, t, f));
                max_err = std::max(max_err, std::abs(back - r.obs(c, t, f)));
            }
    CHECK(max_err < 1e-9);
}

TEST_CASE("scaler rejects panels with unseen features") {
    FeaturePanel p = tiny_panel(2, 20, 5);
    ScalerState s = fit_scaler(p, p.dates.front(), p.dates.back(), "train");
    FeaturePanel other = p;
    other.observed_names[0] = "renamed";
    CHECK_THROWS(apply_scaler(other, s));
}

TEST_CASE("known-future features: weekday encoding and county index") {
    FeaturePanel p;
    p.county_ids = {"a", "b", "c", "d", "e"};
    Date monday = Date::from_ymd(2021, 3, 1);  // a Monday
    REQUIRE(monday.weekday() == 0);
    p.dates.resize(21);
    for (int t = 0; t < 21; ++t) p.dates[t] = monday + t;
    p.target_names = {"y"};
    p.targets.assign(5 * 21, 0.0);
    derive_known_future(p);

    CHECK(p.knw(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));  // SinWeekly(Monday)
    CHECK(p.knw(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));  // CosWeekly(Monday)
    CHECK(p.knw(0, 0, 2) == 0.0);                                  // first county
    CHECK(p.knw(4, 0, 2) == 1.0);                                  // last county
    for (int t = 0; t + 7 < 21; ++t) {
        CHECK(p.knw(0, t, 0) == doctest::Approx(p.knw(0, t + 7, 0)).epsilon(1e-12));
        CHECK(p.knw(0, t, 1) == doctest::Approx(p.knw(0, t + 7, 1)).epsilon(1e-12));
    }
}

TEST_CASE("window counts match brute-force enumeration") {
    WindowSpec spec;  // 13 + 15
    FeaturePanel p = tiny_panel(5, 40, 23);
    auto wins = make_windows(p, spec);
    CHECK(wins.size() == 65);  // 5 * (40 - 28 + 1)

    // brute force: every (county, start) with room for the full window
    long brute = 0;
    for (int c = 0; c < p.C(); ++c)
        for (int s = 0; s + spec.combined() <= p.T(); ++s) ++brute;
    CHECK(static_cast<long>(wins.size()) == brute);
}

TEST_CASE("window boundary cases") {
    WindowSpec spec;
    CHECK(make_windows(tiny_panel(1, 28, 2), spec).size() == 1);
    CHECK_THROWS(make_windows(tiny_panel(1, 27, 2), spec));
}

TEST_CASE("window count formula over all C,T <= 50") {
    WindowSpec small;
    small.past_len = 3;
    small.horizon = 2;
    for (int C = 1; C <= 50; C += 7)
        for (int T = small.combined(); T <= 50; ++T) {
            FeaturePanel p = tiny_panel(C, T, 1000 + C * 51 + T, 0.0);
            auto wins = make_windows(p, small);
            long brute = 0;
            for (int c = 0; c < C; ++c)
                for (int s = 0; s + small.combined() <= T; ++s) ++brute;
            CHECK(static_cast<long>(wins.size()) == brute);
            CHECK(static_cast<long>(wins.size()) == static_cast<long>(C) * (T - small.combined() + 1));
        }
}

TEST_CASE("split: ranges partition prediction starts and keep context") {
    FeaturePanel p = tiny_panel(2, 80, 31);
    WindowSpec spec;
    SplitSpec s;
    Date d0 = p.dates.front();
    s.train = {d0 + 13, d0 + 49};
    s.validation = {d0 + 50, d0 + 64};
    s.test = {d0 + 65, d0 + 79};
    auto parts = split(p, s, spec);

    auto pred_dates = [&](const FeaturePanel& panel) {
        std::vector<Date> out;
        for (auto& w : make_windows(panel, spec)) out.push_back(panel.dates[w.start_t + spec.past_len]);
        return out;
    };
    auto train_d = pred_dates(parts.train);
    auto val_d = pred_dates(parts.validation);
    auto test_d = pred_dates(parts.test);
    for (Date d : train_d) {
        CHECK(d >= s.train.start);
        CHECK(d <= s.train.end);
    }
    for (Date d : val_d) {
        CHECK(d >= s.validation.start);
        CHECK(d <= s.validation.end);
    }
    for (Date d : test_d) {
        CHECK(d >= s.test.start);
        CHECK(d <= s.test.end);
    }
    // degenerate 15-day test range at the end of the panel: one window per county
    CHECK(test_d.size() == 2);

    SplitSpec bad = s;
    bad.validation.end = bad.test.start;
    CHECK_THROWS(split(p, bad, spec));
    SplitSpec outside = s;
    outside.test.end = p.dates.back() + 5;
    CHECK_THROWS(split(p, outside, spec));
}

TEST_CASE("primary split dates slice a synthetic panel spanning them") {
    SynthConfig cfg;
    cfg.counties = 2;
    cfg.days = 700;  // 2020-02-29 + 700 days spans the primary split
    cfg.seed = 5;
    FeaturePanel p = generate_synthetic(cfg);
    auto parts = split(p, primary_split(), WindowSpec{});
    CHECK(parts.train.T() > 0);
    CHECK(parts.validation.T() > 0);
    CHECK(parts.test.T() > 0);
    // prediction starts are pairwise disjoint by construction of the ranges
    CHECK(primary_split().train.end < primary_split().validation.start);
    CHECK(primary_split().validation.end < primary_split().test.start);
}

TEST_CASE("synthetic generator: determinism and structure") {
    SynthConfig cfg;
    cfg.counties = 3;
    cfg.days = 60;
    cfg.seed = 42;
    FeaturePanel a = generate_synthetic(cfg);
    FeaturePanel b = generate_synthetic(cfg);
    CHECK(a.targets == b.targets);
    CHECK(a.observed == b.observed);
    CHECK(a.statics == b.statics);

    cfg.seed = 43;
    FeaturePanel c = generate_synthetic(cfg);
    CHECK(a.targets != c.targets);

    SynthConfig bad = cfg;
    bad.counties = 0;
    CHECK_THROWS(generate_synthetic(bad));
}

TEST_CASE("synthetic weekly amplitude drives lag-7 autocorrelation") {
    SynthConfig cfg;
    cfg.counties = 4;
    cfg.days = 200;
    cfg.seed = 9;
    cfg.weekly_amplitude = 25.0;
    cfg.noise_std = 1.0;
    cfg.feature_coeffs = {};
    FeaturePanel p = generate_synthetic(cfg);

    auto autocorr = [&](int c, int lag) {
        std::vector<double> xs(p.T());
        for (int t = 0; t < p.T(); ++t) xs[t] = p.tgt(c, t, 0);
        auto [mean, sd] = mean_std(xs);
        double s = 0.0;
        for (int t = 0; t + lag < p.T(); ++t) s += (xs[t] - mean) * (xs[t + lag] - mean);
        return s / ((p.T() - lag) * sd * sd);
    };
    for (int c = 0; c < p.C(); ++c) CHECK(autocorr(c, 7) > autocorr(c, 5));
}

TEST_CASE("synthetic: zero noise and zero coefficients leave base + sinusoid") {
    SynthConfig cfg;
    cfg.counties = 2;
    cfg.days = 30;
    cfg.seed = 4;
    cfg.noise_std = 0.0;
    cfg.feature_coeffs = {};
    FeaturePanel p = generate_synthetic(cfg);
    // the same generator with amplitude zero leaves the pure base level
    SynthConfig flat = cfg;
    flat.weekly_amplitude = 0.0;
    FeaturePanel q = generate_synthetic(flat);
    for (int c = 0; c < 2; ++c) {
        // base is constant per county in the flat panel
        for (int t = 1; t < 30; ++t) CHECK(q.tgt(c, t, 0) == doctest::Approx(q.tgt(c, 0, 0)));
        // and the weekly panel oscillates around it
        double mn = 1e300, mx = -1e300;
        for (int t = 0; t < 30; ++t) {
            mn = std::min(mn, p.tgt(c, t, 0));
            mx = std::max(mx, p.tgt(c, t, 0));
        }
        CHECK(mx - mn > cfg.weekly_amplitude);  // amplitude swing present
        CHECK(mn < q.tgt(c, 0, 0));
        CHECK(mx > q.tgt(c, 0, 0));
    }
}

TEST_CASE("load_panel: shapes, zero fill, and error paths") {
    fs::path dir = fs::temp_directory_path() / "stsens_loader_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "dyn");
    fs::create_directories(dir / "tgt");

    auto write = [&](const fs::path& p, const std::string& body) {
        std::ofstream f(p);
        f << body;
    };
    write(dir / "static.csv", "fips,stat_a\n00001,0.5\n00003,0.7\n");
    std::string cases = "fips,date,value\n";
    std::string vax = "fips,date,value\n";
    Date d0 = Date::from_ymd(2021, 1, 1);
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 10; ++t) {
            std::string id = c == 0 ? "00001" : "00003";
            cases += id + "," + (d0 + t).iso() + "," + std::to_string(10 * c + t) + "\n";
            if (t >= 4)  // vaccination starts mid-range
                vax += id + "," + (d0 + t).iso() + ",0.25\n";
        }
    write(dir / "tgt" / "cases.csv", cases);
    write(dir / "dyn" / "vaccination.csv", vax);

    auto [panel, report] = load_panel((dir / "static.csv").string(), (dir / "dyn").string(),
                                      (dir / "tgt").string(), d0, d0 + 9);
    CHECK(panel.C() == 2);
    CHECK(panel.T() == 10);
    CHECK(panel.observed_names == std::vector<std::string>{"vaccination"});
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 4; ++t) CHECK(panel.obs(c, t, 0) == 0.0);
    long vax_fills = 0;
    for (auto& [name, n] : report.zero_fills)
        if (name == "vaccination") vax_fills = n;
    CHECK(vax_fills == 8);  // 2 counties x 4 leading days

    // date gap -> error naming the missing date
    std::string gappy = cases;
    auto pos = gappy.find("00001," + (d0 + 5).iso());
    auto eol = gappy.find('\n', pos);
    gappy.erase(pos, eol - pos + 1);
    write(dir / "tgt" / "cases.csv", gappy);
    CHECK_THROWS_WITH_AS(load_panel((dir / "static.csv").string(), (dir / "dyn").string(),
                                    (dir / "tgt").string(), d0, d0 + 9),
                         doctest::Contains("2021-01-06"), std::runtime_error);
    write(dir / "tgt" / "cases.csv", cases);

    // malformed row -> error with its line number
    write(dir / "dyn" / "vaccination.csv", "fips,date,value\n00001,2021-01-01\n");
    CHECK_THROWS_WITH_AS(load_panel((dir / "static.csv").string(), (dir / "dyn").string(),
                                    (dir / "tgt").string(), d0, d0 + 9),
                         doctest::Contains(":2:"), std::runtime_error);

    // county missing from static -> error listing the id
    write(dir / "dyn" / "vaccination.csv", vax + "00099," + (d0 + 5).iso() + ",1.0\n");
    CHECK_THROWS_WITH_AS(load_panel((dir / "static.csv").string(), (dir / "dyn").string(),
                                    (dir / "tgt").string(), d0, d0 + 9),
                         doctest::Contains("00099"), std::runtime_error);

    fs::remove_all(dir);
}

TEST_CASE("panel round trip through csv writers and loader") {
    FeaturePanel p = tiny_panel(3, 15, 77);
    fs::path dir = fs::temp_directory_path() / "stsens_roundtrip_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "dyn");
    fs::create_directories(dir / "tgt");
    write_static_csv(p, (dir / "static.csv").string());
    for (int f = 0; f < p.n_observed(); ++f)
        write_series_csv(p, FeatureRole::Observed, f, (dir / "dyn" / (p.observed_names[f] + ".csv")).string());
    for (int f = 0; f < p.n_target(); ++f)
        write_series_csv(p, FeatureRole::Target, f, (dir / "tgt" / (p.target_names[f] + ".csv")).string());

    auto [loaded, report] = load_panel((dir / "static.csv").string(), (dir / "dyn").string(),
                                       (dir / "tgt").string(), p.dates.front(), p.dates.back());
    CHECK(report.total_fills() == 0);
    CHECK(loaded.county_ids == p.county_ids);
    for (int c = 0; c < p.C(); ++c)
        for (int t = 0; t < p.T(); ++t)
            for (int f = 0; f < p.n_observed(); ++f)
                CHECK(loaded.obs(c, t, f) == p.obs(c, t, f));  // %.17g is lossless
    fs::remove_all(dir);
}

TEST_CASE("panel archive round trip is exact") {
    FeaturePanel p = tiny_panel(2, 20, 55);
    ScalerState s = fit_scaler(p, p.dates.front(), p.dates.back(), "train");
    fs::path path = fs::temp_directory_path() / "stsens_panel.stp";
    save_panel_archive(p, s, path.string());
    auto [q, s2] = load_panel_archive(path.string());
    CHECK(q.targets == p.targets);
    CHECK(q.observed == p.observed);
    CHECK(q.known == p.known);
    CHECK(s2.ranges == s.ranges);
    CHECK(s2.fitted_on == s.fitted_on);
    fs::remove(path);
}
