#include "stsens/panel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace stsens {

const char* role_name(FeatureRole r) {
    switch (r) {
        case FeatureRole::Static: return "static";
        case FeatureRole::Observed: return "observed";
        case FeatureRole::Known: return "known";
        case FeatureRole::Target: return "target";
    }
    return "?";
}

bool FeaturePanel::has_feature(const std::string& name) const {
    auto in = [&](const std::vector<std::string>& v) {
        return std::find(v.begin(), v.end(), name) != v.end();
    };
    return in(static_names) || in(observed_names) || in(known_names) || in(target_names);
}

FeatureRole FeaturePanel::role_of(const std::string& name) const {
    auto in = [&](const std::vector<std::string>& v) {
        return std::find(v.begin(), v.end(), name) != v.end();
    };
    if (in(static_names)) return FeatureRole::Static;
    if (in(observed_names)) return FeatureRole::Observed;
    if (in(known_names)) return FeatureRole::Known;
    if (in(target_names)) return FeatureRole::Target;
    throw std::invalid_argument("unknown feature '" + name + "'");
}

int FeaturePanel::index_of(const std::string& name) const {
    const std::vector<std::string>* group = nullptr;
    switch (role_of(name)) {
        case FeatureRole::Static: group = &static_names; break;
        case FeatureRole::Observed: group = &observed_names; break;
        case FeatureRole::Known: group = &known_names; break;
        case FeatureRole::Target: group = &target_names; break;
    }
    return static_cast<int>(std::find(group->begin(), group->end(), name) - group->begin());
}

std::vector<std::string> FeaturePanel::all_feature_names() const {
    std::vector<std::string> out;
    for (const auto& n : static_names) out.push_back(n);
    for (const auto& n : observed_names) out.push_back(n);
    for (const auto& n : known_names) out.push_back(n);
    for (const auto& n : target_names) out.push_back(n);
    return out;
}

void FeaturePanel::validate() const {
    if (C() < 1) throw std::invalid_argument("panel: no counties");
    if (T() < 1) throw std::invalid_argument("panel: no dates");
    for (int t = 1; t < T(); ++t) {
        if (dates[t] - dates[t - 1] != 1)
            throw std::invalid_argument("panel: date gap before " + dates[t].iso());
    }
    auto expect = [](size_t got, size_t want, const char* what) {
        if (got != want)
            throw std::invalid_argument(std::string("panel: ") + what + " array size mismatch");
    };
    expect(statics.size(), static_cast<size_t>(C()) * n_static(), "static");
    expect(observed.size(), static_cast<size_t>(C()) * T() * n_observed(), "observed");
    expect(known.size(), static_cast<size_t>(C()) * T() * n_known(), "known");
    expect(targets.size(), static_cast<size_t>(C()) * T() * n_target(), "target");

    std::set<std::string> seen;
    for (const auto& n : all_feature_names()) {
        if (!seen.insert(n).second)
            throw std::invalid_argument("panel: feature '" + n + "' has more than one role");
    }
    std::set<std::string> ids(county_ids.begin(), county_ids.end());
    if (ids.size() != county_ids.size()) throw std::invalid_argument("panel: duplicate county ids");
}

double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw std::invalid_argument("quantile: empty series");
    std::sort(xs.begin(), xs.end());
    if (xs.size() == 1) return xs[0];
    double pos = q * (static_cast<double>(xs.size()) - 1.0);
    size_t lo = static_cast<size_t>(pos);
    if (lo >= xs.size() - 1) return xs.back();
    double frac = pos - static_cast<double>(lo);
    return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

OutlierBounds compute_outlier_bounds(const std::vector<double>& series, double multiplier) {
    if (series.empty()) throw std::invalid_argument("compute_outlier_bounds: empty series");
    OutlierBounds b;
    b.multiplier = multiplier;
    b.q1 = quantile(series, 0.25);
    b.q3 = quantile(series, 0.75);
    b.iqr = b.q3 - b.q1;
    b.lower = b.q1 - multiplier * b.iqr;
    b.upper = b.q3 + multiplier * b.iqr;
    return b;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

long CleanReport::total_clipped() const {
    long n = 0;
    for (const auto& f : features) n += f.clipped;
    return n;
}

namespace {

CleanFeatureStats clip_series(std::vector<double>& xs, const std::string& name, FeatureRole role,
                              double multiplier) {
    CleanFeatureStats st;
    st.name = name;
    st.role = role;
    std::tie(st.mean_before, st.std_before) = mean_std(xs);
    st.bounds = compute_outlier_bounds(xs, multiplier);
    for (double& x : xs) {
        if (x < st.bounds.lower) {
            x = st.bounds.lower;
            ++st.clipped;
        } else if (x > st.bounds.upper) {
            x = st.bounds.upper;
            ++st.clipped;
        }
    }
    std::tie(st.mean_after, st.std_after) = mean_std(xs);
    return st;
}

}  // namespace

std::pair<FeaturePanel, CleanReport> clean_outliers(const FeaturePanel& panel, double multiplier) {
    panel.validate();
    FeaturePanel out = panel;
    CleanReport report;
    report.multiplier = multiplier;
    const int C = panel.C(), T = panel.T();

    for (int f = 0; f < panel.n_target(); ++f) {
        std::vector<double> pooled(static_cast<size_t>(C) * T);
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) pooled[static_cast<size_t>(c) * T + t] = panel.tgt(c, t, f);
        auto st = clip_series(pooled, panel.target_names[f], FeatureRole::Target, multiplier);
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) out.tgt(c, t, f) = pooled[static_cast<size_t>(c) * T + t];
        report.features.push_back(st);
    }
    for (int f = 0; f < panel.n_observed(); ++f) {
        std::vector<double> pooled(static_cast<size_t>(C) * T);
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) pooled[static_cast<size_t>(c) * T + t] = panel.obs(c, t, f);
        auto st = clip_series(pooled, panel.observed_names[f], FeatureRole::Observed, multiplier);
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) out.obs(c, t, f) = pooled[static_cast<size_t>(c) * T + t];
        report.features.push_back(st);
    }
    for (int f = 0; f < panel.n_static(); ++f) {
        std::vector<double> pooled(C);
        for (int c = 0; c < C; ++c) pooled[c] = panel.stat(c, f);
        auto st = clip_series(pooled, panel.static_names[f], FeatureRole::Static, multiplier);
        for (int c = 0; c < C; ++c) out.stat(c, f) = pooled[c];
        report.features.push_back(st);
    }
    return {std::move(out), std::move(report)};
}

double ScalerState::scale_value(const std::string& feature, double x) const {
    auto it = ranges.find(feature);
    if (it == ranges.end()) throw std::invalid_argument("scaler has no feature '" + feature + "'");
    double lo = it->second.first, hi = it->second.second;
    if (hi <= lo) return 0.0;
    return (x - lo) / (hi - lo);
}

double ScalerState::unscale_value(const std::string& feature, double x) const {
    auto it = ranges.find(feature);
    if (it == ranges.end()) throw std::invalid_argument("scaler has no feature '" + feature + "'");
    double lo = it->second.first, hi = it->second.second;
    if (hi <= lo) return lo;
    return x * (hi - lo) + lo;
}

double ScalerState::range_width(const std::string& feature) const {
    auto it = ranges.find(feature);
    if (it == ranges.end()) throw std::invalid_argument("scaler has no feature '" + feature + "'");
    return it->second.second - it->second.first;
}

ScalerState fit_scaler(const FeaturePanel& panel, Date fit_start, Date fit_end,
                       const std::string& split_id) {
    if (fit_end < fit_start) throw std::invalid_argument("fit_scaler: empty fit range");
    int t0 = panel.date_index(fit_start);
    int t1 = panel.date_index(fit_end);
    if (t0 < 0 || t1 < 0) throw std::invalid_argument("fit_scaler: fit range outside panel dates");

    ScalerState s;
    s.fitted_on = split_id;
    auto fit = [&](const std::string& name, auto get, int nf_unused) {
        (void)nf_unused;
        double lo = get(0, t0), hi = lo;
        for (int c = 0; c < panel.C(); ++c)
            for (int t = t0; t <= t1; ++t) {
                double x = get(c, t);
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        s.ranges[name] = {lo, hi};
    };
    for (int f = 0; f < panel.n_observed(); ++f)
        fit(panel.observed_names[f], [&](int c, int t) { return panel.obs(c, t, f); }, 0);
    for (int f = 0; f < panel.n_known(); ++f)
        fit(panel.known_names[f], [&](int c, int t) { return panel.knw(c, t, f); }, 0);
    for (int f = 0; f < panel.n_target(); ++f)
        fit(panel.target_names[f], [&](int c, int t) { return panel.tgt(c, t, f); }, 0);
    for (int f = 0; f < panel.n_static(); ++f) {
        double lo = panel.stat(0, f), hi = lo;
        for (int c = 0; c < panel.C(); ++c) {
            lo = std::min(lo, panel.stat(c, f));
            hi = std::max(hi, panel.stat(c, f));
        }
        s.ranges[panel.static_names[f]] = {lo, hi};
    }
    return s;
}

FeaturePanel apply_scaler(const FeaturePanel& panel, const ScalerState& scaler) {
    for (const auto& name : panel.all_feature_names()) {
        if (scaler.ranges.find(name) == scaler.ranges.end())
            throw std::invalid_argument("apply_scaler: scaler fitted without feature '" + name + "'");
    }
    FeaturePanel out = panel;
    const int C = panel.C(), T = panel.T();
    for (int f = 0; f < panel.n_observed(); ++f)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                out.obs(c, t, f) = scaler.scale_value(panel.observed_names[f], panel.obs(c, t, f));
    for (int f = 0; f < panel.n_known(); ++f)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                out.knw(c, t, f) = scaler.scale_value(panel.known_names[f], panel.knw(c, t, f));
    for (int f = 0; f < panel.n_target(); ++f)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                out.tgt(c, t, f) = scaler.scale_value(panel.target_names[f], panel.tgt(c, t, f));
    for (int f = 0; f < panel.n_static(); ++f)
        for (int c = 0; c < C; ++c)
            out.stat(c, f) = scaler.scale_value(panel.static_names[f], panel.stat(c, f));
    return out;
}

void derive_known_future(FeaturePanel& panel) {
    const int C = panel.C(), T = panel.T();
    panel.known_names = {"SinWeekly", "CosWeekly", "LinearSpace"};
    panel.known.assign(static_cast<size_t>(C) * T * 3, 0.0);
    for (int c = 0; c < C; ++c) {
        double lin = C > 1 ? static_cast<double>(c) / (C - 1) : 0.0;
        for (int t = 0; t < T; ++t) {
            int dow = panel.dates[t].weekday();
            panel.knw(c, t, 0) = std::sin(2.0 * M_PI * dow / 7.0);
            panel.knw(c, t, 1) = std::cos(2.0 * M_PI * dow / 7.0);
            panel.knw(c, t, 2) = lin;
        }
    }
}

double feature_std(const FeaturePanel& panel, const std::string& feature, Date from, Date to) {
    int t0 = panel.date_index(from);
    int t1 = panel.date_index(to);
    if (t0 < 0 || t1 < 0 || t1 < t0) throw std::invalid_argument("feature_std: bad date range");
    FeatureRole role = panel.role_of(feature);
    int f = panel.index_of(feature);
    std::vector<double> xs;
    if (role == FeatureRole::Static) {
        for (int c = 0; c < panel.C(); ++c) xs.push_back(panel.stat(c, f));
    } else {
        for (int c = 0; c < panel.C(); ++c)
            for (int t = t0; t <= t1; ++t) {
                switch (role) {
                    case FeatureRole::Observed: xs.push_back(panel.obs(c, t, f)); break;
                    case FeatureRole::Known: xs.push_back(panel.knw(c, t, f)); break;
                    case FeatureRole::Target: xs.push_back(panel.tgt(c, t, f)); break;
                    default: break;
                }
            }
    }
    return mean_std(xs).second;
}

}  // namespace stsens
