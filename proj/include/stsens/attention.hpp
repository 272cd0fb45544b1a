#pragma once

#include <map>
#include <string>
#include <vector>

#include "stsens/mat.hpp"
#include "stsens/model.hpp"
#include "stsens/panel.hpp"

namespace stsens {

// Streaming mean of attention matrices over heads and windows. Windows must
// be fed in a fixed order for bit-reproducible output.
class AttentionAggregator {
public:
    void add_window(const std::vector<Mat>& head_attention);
    long windows() const { return windows_; }
    Mat mean() const;  // [d_s x d_s]; throws when no windows were added

private:
    Mat sum_;
    long matrices_ = 0;
    long windows_ = 0;
};

// Attention row of the first forecast position restricted to the past
// positions, re-indexed by lag: element 0 is lag -past_len, the last is
// lag -1. Requires at least past_len + 1 positions.
std::vector<double> lag_profile(const Mat& mean_attention, int past_len);

// Per-calendar-date mean of one-step-ahead attention mass, over every
// window in which the date is visible in the past.
class DailyAttentionAggregator {
public:
    void add_window(Date pred_start, const std::vector<Mat>& head_attention, int past_len);
    // (date, mean attention, number of windows the date was visible in)
    std::vector<std::tuple<Date, double, long>> series() const;

private:
    std::map<int, std::pair<double, long>> acc_;  // date serial -> (sum, count)
};

struct ImportanceEntry {
    std::string feature;
    double percent = 0.0;
};

// Per selection network: static / past ("observed") / future ("known").
// Known-future features feed both temporal networks, so they appear in
// both of the last two columns.
struct ImportanceTable {
    std::vector<ImportanceEntry> statics, observed, known;
};

// Sums VSN selection weights per feature over windows and timesteps, then
// normalizes each column to percentages.
class ImportanceAggregator {
public:
    void add_window(const WindowOutput& out);
    ImportanceTable finalize(const std::vector<std::string>& static_names,
                             const std::vector<std::string>& past_names,
                             const std::vector<std::string>& known_names) const;

private:
    std::vector<double> stat_sum_, past_sum_, fut_sum_;
};

void write_attention_mean_csv(const Mat& mean, const std::string& path);
void write_lag_profile_csv(const std::vector<double>& profile, const std::string& path);
void write_daily_attention_csv(const std::vector<std::tuple<Date, double, long>>& series,
                               const std::vector<double>& observed_target, const std::string& path);
void write_importance_csv(const ImportanceTable& table, const std::string& path);

}  // namespace stsens
