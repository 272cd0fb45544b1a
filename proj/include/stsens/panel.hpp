#pragma once

#include <map>
#include <string>
#include <vector>

#include "stsens/dates.hpp"

namespace stsens {

enum class FeatureRole { Static, Observed, Known, Target };

const char* role_name(FeatureRole r);

// County-by-day feature panel. Dynamic/known/target arrays are [C x T x F]
// flat (county-major), statics are [C x F]. Known-future features are
// derived from the calendar, not loaded.
struct FeaturePanel {
    std::vector<std::string> county_ids;
    std::vector<Date> dates;

    std::vector<std::string> static_names;
    std::vector<std::string> observed_names;
    std::vector<std::string> known_names;
    std::vector<std::string> target_names;

    std::vector<double> statics;
    std::vector<double> observed;
    std::vector<double> known;
    std::vector<double> targets;

    int C() const { return static_cast<int>(county_ids.size()); }
    int T() const { return static_cast<int>(dates.size()); }
    int n_static() const { return static_cast<int>(static_names.size()); }
    int n_observed() const { return static_cast<int>(observed_names.size()); }
    int n_known() const { return static_cast<int>(known_names.size()); }
    int n_target() const { return static_cast<int>(target_names.size()); }

    double& stat(int c, int f) { return statics[static_cast<size_t>(c) * n_static() + f]; }
    double stat(int c, int f) const { return statics[static_cast<size_t>(c) * n_static() + f]; }
    double& obs(int c, int t, int f) {
        return observed[(static_cast<size_t>(c) * T() + t) * n_observed() + f];
    }
    double obs(int c, int t, int f) const {
        return observed[(static_cast<size_t>(c) * T() + t) * n_observed() + f];
    }
    double& knw(int c, int t, int f) { return known[(static_cast<size_t>(c) * T() + t) * n_known() + f]; }
    double knw(int c, int t, int f) const {
        return known[(static_cast<size_t>(c) * T() + t) * n_known() + f];
    }
    double& tgt(int c, int t, int f) { return targets[(static_cast<size_t>(c) * T() + t) * n_target() + f]; }
    double tgt(int c, int t, int f) const {
        return targets[(static_cast<size_t>(c) * T() + t) * n_target() + f];
    }

    // -1 if the date is outside the panel.
    int date_index(Date d) const {
        if (dates.empty() || d < dates.front() || d > dates.back()) return -1;
        return d - dates.front();
    }

    bool has_feature(const std::string& name) const;
    FeatureRole role_of(const std::string& name) const;  // throws if unknown
    // Index of the feature within its role group.
    int index_of(const std::string& name) const;

    // Every feature name across all roles, static first.
    std::vector<std::string> all_feature_names() const;

    // Throws on any invariant violation (gapped dates, inconsistent array
    // sizes, duplicate feature names).
    void validate() const;
};

struct OutlierBounds {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double multiplier = 7.5;
};

// Quartiles by linear interpolation between order statistics, thresholds
// lower = Q1 - m*IQR, upper = Q3 + m*IQR.
OutlierBounds compute_outlier_bounds(const std::vector<double>& series, double multiplier = 7.5);

// Interpolated quantile of an unsorted copy of xs, q in [0,1].
double quantile(std::vector<double> xs, double q);

struct CleanFeatureStats {
    std::string name;
    FeatureRole role;
    long clipped = 0;
    double mean_before = 0.0, std_before = 0.0;
    double mean_after = 0.0, std_after = 0.0;
    OutlierBounds bounds;
};

struct CleanReport {
    double multiplier = 7.5;
    std::vector<CleanFeatureStats> features;
    long total_clipped() const;
};

// Clips each observed/target/static feature (pooled over counties and days)
// to its outlier bounds. Pure: returns a new panel.
std::pair<FeaturePanel, CleanReport> clean_outliers(const FeaturePanel& panel, double multiplier = 7.5);

struct ScalerState {
    std::string fitted_on;  // split identifier, e.g. "train 2020-02-29..2021-11-29"
    // feature name -> (min, max)
    std::map<std::string, std::pair<double, double>> ranges;

    double scale_value(const std::string& feature, double x) const;
    double unscale_value(const std::string& feature, double x) const;
    // std of the raw feature recovered from a scaled-space std (min-max is
    // affine, so std_raw = std_scaled * (max - min)).
    double range_width(const std::string& feature) const;
};

// Fits per-feature min/max on rows whose date lies in [fit_start, fit_end].
ScalerState fit_scaler(const FeaturePanel& panel, Date fit_start, Date fit_end,
                       const std::string& split_id);

// (x - min) / (max - min) per feature; degenerate max == min maps to 0.
// Throws if the scaler's feature set does not cover the panel.
FeaturePanel apply_scaler(const FeaturePanel& panel, const ScalerState& scaler);

// Fills known_names/known with SinWeekly, CosWeekly (weekly calendar
// encodings, Monday = 0) and LinearSpace (county ordinal scaled to [0,1]).
void derive_known_future(FeaturePanel& panel);

// Mean and population std of a series.
std::pair<double, double> mean_std(const std::vector<double>& xs);

// Train-range std of a feature in its stored (unscaled) units.
double feature_std(const FeaturePanel& panel, const std::string& feature, Date from, Date to);

}  // namespace stsens
