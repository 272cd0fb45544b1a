#pragma once

#include <string>
#include <vector>

#include "stsens/panel.hpp"

namespace stsens {

struct LoadReport {
    // feature -> number of cells zero-filled before its first available date
    std::vector<std::pair<std::string, long>> zero_fills;
    long total_fills() const;
};

// static CSV: header "fips,<feature1>,...", one row per county.
// dynamic/target inputs: a directory of per-feature files (or a single
// file), each "fips,date,value" in long form; the feature name is the file
// stem. Values before a feature's first available date are filled with 0
// and counted in the report; gaps after that are errors.
std::pair<FeaturePanel, LoadReport> load_panel(const std::string& static_path,
                                               const std::string& dynamic_path,
                                               const std::string& target_path, Date start, Date end);

// Writers used by the synthetic-data command; same schemas as above.
void write_static_csv(const FeaturePanel& panel, const std::string& path);
void write_series_csv(const FeaturePanel& panel, FeatureRole role, int feature_idx,
                      const std::string& path);

// Binary panel archive (cleaned+scaled panel plus scaler), written by the
// prepare step and consumed by train/evaluate/morris/attention.
void save_panel_archive(const FeaturePanel& panel, const ScalerState& scaler,
                        const std::string& path);
std::pair<FeaturePanel, ScalerState> load_panel_archive(const std::string& path);

void write_clean_report_csv(const CleanReport& report, const std::string& path);

// Full-precision decimal formatting shared by every CSV writer, so that
// identical runs emit identical bytes.
std::string fmt_double(double x);

}  // namespace stsens
