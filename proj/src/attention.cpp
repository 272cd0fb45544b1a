#include "stsens/attention.hpp"

#include <fstream>
#include <stdexcept>

#include "stsens/csvio.hpp"

namespace stsens {

void AttentionAggregator::add_window(const std::vector<Mat>& head_attention) {
    if (head_attention.empty()) throw std::invalid_argument("attention aggregate: window has no heads");
    for (const Mat& a : head_attention) {
        if (sum_.size() == 0) {
            sum_ = Mat(a.rows, a.cols, 0.0);
        } else if (!sum_.same_shape(a)) {
            throw std::invalid_argument("attention aggregate: inconsistent d_s across windows (" +
                                        shape_str(sum_) + " vs " + shape_str(a) + ")");
        }
        for (size_t i = 0; i < a.size(); ++i) sum_.v[i] += a.v[i];
        ++matrices_;
    }
    ++windows_;
}

Mat AttentionAggregator::mean() const {
    if (matrices_ == 0) throw std::logic_error("attention aggregate: no windows added");
    Mat m = sum_;
    for (double& x : m.v) x /= static_cast<double>(matrices_);
    return m;
}

std::vector<double> lag_profile(const Mat& mean_attention, int past_len) {
    if (mean_attention.rows != mean_attention.cols)
        throw std::invalid_argument("lag_profile: attention matrix must be square");
    if (mean_attention.rows < past_len + 1)
        throw std::invalid_argument("lag_profile: need at least " + std::to_string(past_len + 1) +
                                    " positions, got " + std::to_string(mean_attention.rows));
    std::vector<double> profile(past_len);
    for (int j = 0; j < past_len; ++j) profile[j] = mean_attention(past_len, j);
    return profile;
}

void DailyAttentionAggregator::add_window(Date pred_start, const std::vector<Mat>& head_attention,
                                          int past_len) {
    if (head_attention.empty()) throw std::invalid_argument("daily attention: window has no heads");
    for (int j = 0; j < past_len; ++j) {
        double mass = 0.0;
        for (const Mat& a : head_attention) mass += a(past_len, j);
        mass /= static_cast<double>(head_attention.size());
        Date day = pred_start - past_len + j;
        auto& slot = acc_[day.serial];
        slot.first += mass;
        slot.second += 1;
    }
}

std::vector<std::tuple<Date, double, long>> DailyAttentionAggregator::series() const {
    std::vector<std::tuple<Date, double, long>> out;
    out.reserve(acc_.size());
    for (const auto& [serial, slot] : acc_)
        out.emplace_back(Date(serial), slot.first / static_cast<double>(slot.second), slot.second);
    return out;
}

void ImportanceAggregator::add_window(const WindowOutput& out) {
    auto accumulate = [](std::vector<double>& sums, const Mat& weights) {
        if (weights.size() == 0) return;
        if (sums.empty()) sums.assign(weights.cols, 0.0);
        if (static_cast<int>(sums.size()) != weights.cols)
            throw std::invalid_argument("importance: inconsistent feature count across windows");
        for (int t = 0; t < weights.rows; ++t)
            for (int f = 0; f < weights.cols; ++f) sums[f] += weights(t, f);
    };
    accumulate(stat_sum_, out.vsn_static_weights);
    accumulate(past_sum_, out.vsn_past_weights);
    accumulate(fut_sum_, out.vsn_future_weights);
}

namespace {

std::vector<ImportanceEntry> to_percent(const std::vector<double>& sums,
                                        const std::vector<std::string>& names) {
    if (sums.size() != names.size())
        throw std::invalid_argument("importance: name count does not match weight count");
    double total = 0.0;
    for (double s : sums) total += s;
    std::vector<ImportanceEntry> out;
    for (size_t f = 0; f < sums.size(); ++f)
        out.push_back({names[f], total > 0.0 ? 100.0 * sums[f] / total : 0.0});
    return out;
}

}  // namespace

ImportanceTable ImportanceAggregator::finalize(const std::vector<std::string>& static_names,
                                               const std::vector<std::string>& past_names,
                                               const std::vector<std::string>& known_names) const {
    ImportanceTable table;
    if (!stat_sum_.empty()) table.statics = to_percent(stat_sum_, static_names);
    table.observed = to_percent(past_sum_, past_names);
    table.known = to_percent(fut_sum_, known_names);
    return table;
}

void write_attention_mean_csv(const Mat& mean, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (int i = 0; i < mean.rows; ++i) {
        for (int j = 0; j < mean.cols; ++j) out << (j ? "," : "") << fmt_double(mean(i, j));
        out << "\n";
    }
}

void write_lag_profile_csv(const std::vector<double>& profile, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "lag,attention\n";
    int n = static_cast<int>(profile.size());
    for (int j = 0; j < n; ++j) out << (j - n) << "," << fmt_double(profile[j]) << "\n";
}

void write_daily_attention_csv(const std::vector<std::tuple<Date, double, long>>& series,
                               const std::vector<double>& observed_target, const std::string& path) {
    if (!observed_target.empty() && observed_target.size() != series.size())
        throw std::invalid_argument("daily attention csv: observed series length mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "date,attention,observed_target\n";
    for (size_t i = 0; i < series.size(); ++i) {
        const auto& [date, attn, count] = series[i];
        out << date.iso() << "," << fmt_double(attn) << ","
            << (observed_target.empty() ? "" : fmt_double(observed_target[i])) << "\n";
    }
}

void write_importance_csv(const ImportanceTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "role,feature,percent\n";
    for (const auto& e : table.statics) out << "static," << e.feature << "," << fmt_double(e.percent) << "\n";
    for (const auto& e : table.observed)
        out << "observed," << e.feature << "," << fmt_double(e.percent) << "\n";
    for (const auto& e : table.known) out << "known," << e.feature << "," << fmt_double(e.percent) << "\n";
}

}  // namespace stsens
