#include "stsens/windows.hpp"

#include <stdexcept>

namespace stsens {

void SplitSpec::validate() const {
    auto ok = [](const DateRange& r) { return r.start <= r.end; };
    if (!ok(train) || !ok(validation) || !ok(test)) throw std::invalid_argument("split: empty range");
    if (!(train.end < validation.start))
        throw std::invalid_argument("split: train must end before validation starts");
    if (!(validation.end < test.start))
        throw std::invalid_argument("split: validation must end before test starts");
}

SplitSpec primary_split() {
    SplitSpec s;
    s.train = {Date::from_ymd(2020, 2, 29), Date::from_ymd(2021, 11, 29)};
    s.validation = {Date::from_ymd(2021, 11, 30), Date::from_ymd(2021, 12, 14)};
    s.test = {Date::from_ymd(2021, 12, 15), Date::from_ymd(2021, 12, 29)};
    return s;
}

std::vector<WindowRef> make_windows(const FeaturePanel& panel, const WindowSpec& spec) {
    if (spec.past_len < 1 || spec.horizon < 1 || spec.stride < 1)
        throw std::invalid_argument("window spec: lengths must be positive");
    const int d_s = spec.combined();
    if (panel.T() < d_s)
        throw std::invalid_argument("make_windows: T=" + std::to_string(panel.T()) +
                                    " shorter than combined window length " + std::to_string(d_s));
    std::vector<WindowRef> out;
    out.reserve(static_cast<size_t>(panel.C()) * ((panel.T() - d_s) / spec.stride + 1));
    for (int c = 0; c < panel.C(); ++c)
        for (int s = 0; s + d_s <= panel.T(); s += spec.stride) out.push_back({c, s});
    return out;
}

namespace {

FeaturePanel restrict_dates(const FeaturePanel& panel, Date from, Date to) {
    int t0 = panel.date_index(from);
    int t1 = panel.date_index(to);
    if (t0 < 0 || t1 < 0 || t1 < t0) throw std::invalid_argument("restrict_dates: bad range");
    FeaturePanel out;
    out.county_ids = panel.county_ids;
    out.static_names = panel.static_names;
    out.observed_names = panel.observed_names;
    out.known_names = panel.known_names;
    out.target_names = panel.target_names;
    out.statics = panel.statics;
    const int T = t1 - t0 + 1;
    out.dates.resize(T);
    for (int t = 0; t < T; ++t) out.dates[t] = panel.dates[t0 + t];
    auto copy = [&](const std::vector<double>& src, std::vector<double>& dst, int F) {
        dst.resize(static_cast<size_t>(panel.C()) * T * F);
        for (int c = 0; c < panel.C(); ++c)
            for (int t = 0; t < T; ++t)
                for (int f = 0; f < F; ++f)
                    dst[(static_cast<size_t>(c) * T + t) * F + f] =
                        src[(static_cast<size_t>(c) * panel.T() + t0 + t) * F + f];
    };
    copy(panel.observed, out.observed, panel.n_observed());
    copy(panel.known, out.known, panel.n_known());
    copy(panel.targets, out.targets, panel.n_target());
    return out;
}

}  // namespace

SplitPanels split(const FeaturePanel& panel, const SplitSpec& spec, const WindowSpec& wspec) {
    spec.validate();
    for (const DateRange* r : {&spec.train, &spec.validation, &spec.test}) {
        if (panel.date_index(r->start) < 0 || panel.date_index(r->end) < 0)
            throw std::invalid_argument("split: range " + r->start.iso() + ".." + r->end.iso() +
                                        " not inside panel dates");
    }
    auto sub = [&](const DateRange& r) {
        Date from = r.start - wspec.past_len;
        if (from < panel.dates.front()) from = panel.dates.front();
        Date to = r.end + (wspec.horizon - 1);
        if (to > panel.dates.back()) to = panel.dates.back();
        return restrict_dates(panel, from, to);
    };
    return {sub(spec.train), sub(spec.validation), sub(spec.test)};
}

WindowData materialize(const FeaturePanel& panel, const WindowSpec& spec, WindowRef ref) {
    const int F_tgt = panel.n_target(), F_obs = panel.n_observed(), F_knw = panel.n_known();
    WindowData w;
    w.county = ref.county;
    w.pred_start = panel.dates[ref.start_t + spec.past_len];
    w.past = Mat(spec.past_len, F_tgt + F_obs + F_knw);
    w.future = Mat(spec.horizon, F_knw);
    w.statics = Mat(1, panel.n_static());
    w.target = Mat(spec.horizon, F_tgt);
    for (int i = 0; i < spec.past_len; ++i) {
        int t = ref.start_t + i;
        int j = 0;
        for (int f = 0; f < F_tgt; ++f) w.past(i, j++) = panel.tgt(ref.county, t, f);
        for (int f = 0; f < F_obs; ++f) w.past(i, j++) = panel.obs(ref.county, t, f);
        for (int f = 0; f < F_knw; ++f) w.past(i, j++) = panel.knw(ref.county, t, f);
    }
    for (int i = 0; i < spec.horizon; ++i) {
        int t = ref.start_t + spec.past_len + i;
        for (int f = 0; f < F_knw; ++f) w.future(i, f) = panel.knw(ref.county, t, f);
        for (int f = 0; f < F_tgt; ++f) w.target(i, f) = panel.tgt(ref.county, t, f);
    }
    for (int f = 0; f < panel.n_static(); ++f) w.statics(0, f) = panel.stat(ref.county, f);
    return w;
}

std::vector<std::string> past_input_names(const FeaturePanel& panel) {
    std::vector<std::string> names;
    for (const auto& n : panel.target_names) names.push_back(n);
    for (const auto& n : panel.observed_names) names.push_back(n);
    for (const auto& n : panel.known_names) names.push_back(n);
    return names;
}

}  // namespace stsens
