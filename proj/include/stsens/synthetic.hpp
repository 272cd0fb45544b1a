#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsens/panel.hpp"

namespace stsens {

// Seeded synthetic panel generator.
//
// Targets follow
//   cases[c][t]  = base_c(t) + amp_c(t) * weekly_amplitude * sin(2*pi*(t + phase_c)/7)
//                  + sum_f coeff_f * obs_f[c][t] + noise_std * eps
//   deaths[c][t] = 0.15 * base_c(t) + 0.3 * (weekly term) + 0.3 * (feature term)
//                  + 0.5 * noise_std * eps
// with base_c(t) a per-county level (optionally drifting as a random walk
// with daily std base_drift), amp_c(t) a per-(county, weekday) amplitude
// lane that random-walks week over week when amp_walk > 0, and obs_f AR(1)
// series in [0, 1]. Weekly phase follows the calendar weekday, shared
// across counties. Two static columns (stat_a, stat_b) are drawn per
// county. With noise_std = amp_walk = base_drift = 0 the targets are
// exactly base + sinusoid + feature combination.
struct SynthConfig {
    int counties = 10;
    int days = 120;
    uint64_t seed = 1;
    double weekly_amplitude = 10.0;
    double noise_std = 1.0;
    std::vector<double> feature_coeffs = {5.0, 0.5};
    Date start_date = Date::from_ymd(2020, 2, 29);
    double base_min = 50.0;
    double base_max = 150.0;
    double base_drift = 0.0;
    double amp_walk = 0.0;
};

// Parses the key=value config format (keys: counties, days, seed,
// weekly_amplitude, noise_std, feature_coeffs; optional start_date,
// base_min, base_max). '#' starts a comment.
SynthConfig parse_synth_config(const std::string& path);

FeaturePanel generate_synthetic(const SynthConfig& config);

}  // namespace stsens
