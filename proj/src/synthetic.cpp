#include "stsens/synthetic.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stsens/rng.hpp"

namespace stsens {

SynthConfig parse_synth_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    SynthConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
        };
        trim(key);
        trim(val);
        try {
            if (key == "counties") cfg.counties = std::stoi(val);
            else if (key == "days") cfg.days = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "weekly_amplitude") cfg.weekly_amplitude = std::stod(val);
            else if (key == "noise_std") cfg.noise_std = std::stod(val);
            else if (key == "start_date") cfg.start_date = parse_date(val);
            else if (key == "base_min") cfg.base_min = std::stod(val);
            else if (key == "base_max") cfg.base_max = std::stod(val);
            else if (key == "base_drift") cfg.base_drift = std::stod(val);
            else if (key == "amp_walk") cfg.amp_walk = std::stod(val);
            else if (key == "feature_coeffs") {
                cfg.feature_coeffs.clear();
                std::stringstream ss(val);
                std::string tok;
                while (std::getline(ss, tok, ',')) cfg.feature_coeffs.push_back(std::stod(tok));
            } else {
                throw std::runtime_error("unknown key '" + key + "'");
            }
        } catch (const std::runtime_error&) {
            throw;
        } catch (...) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return cfg;
}

FeaturePanel generate_synthetic(const SynthConfig& config) {
    if (config.counties <= 0 || config.days <= 0)
        throw std::invalid_argument("generate_synthetic: counties and days must be positive");

    const int C = config.counties;
    const int T = config.days;
    const int F = static_cast<int>(config.feature_coeffs.size());
    Rng rng(config.seed);

    FeaturePanel p;
    for (int c = 0; c < C; ++c) {
        char id[16];
        std::snprintf(id, sizeof(id), "%05d", 1001 + 2 * c);
        p.county_ids.push_back(id);
    }
    p.dates.resize(T);
    for (int t = 0; t < T; ++t) p.dates[t] = config.start_date + t;

    p.static_names = {"stat_a", "stat_b"};
    p.statics.resize(static_cast<size_t>(C) * 2);
    for (int c = 0; c < C; ++c) {
        p.stat(c, 0) = rng.uniform(0.2, 0.8);
        p.stat(c, 1) = rng.uniform(0.0, 1.0);
    }

    for (int f = 0; f < F; ++f) p.observed_names.push_back("obs" + std::to_string(f + 1));
    p.observed.assign(static_cast<size_t>(C) * T * std::max(F, 1), 0.0);
    if (F == 0) p.observed.clear();
    // AR(1) features, kept in [0,1] by construction
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < C; ++c) {
            double x = rng.uniform(0.0, 1.0);
            for (int t = 0; t < T; ++t) {
                x = 0.55 * x + 0.45 * rng.uniform(0.0, 1.0);
                p.obs(c, t, f) = x;
            }
        }

    std::vector<double> base0(C);
    for (int c = 0; c < C; ++c) base0[c] = rng.uniform(config.base_min, config.base_max);
    // per-county level path; flat when base_drift is zero
    std::vector<std::vector<double>> base(C, std::vector<double>(T));
    for (int c = 0; c < C; ++c) {
        double level = base0[c];
        for (int t = 0; t < T; ++t) {
            level += config.base_drift * rng.normal();
            base[c][t] = level;
        }
    }
    // The weekly phase is shared across counties (a reporting day-of-week
    // effect). With amp_walk > 0 each (county, weekday) lane's amplitude
    // drifts week over week, so last week's same-weekday value stays the
    // best predictor of today's weekly component.
    const int weeks = (T + 13) / 7 + 1;
    std::vector<std::vector<std::array<double, 7>>> amp(
        C, std::vector<std::array<double, 7>>(weeks));
    for (int c = 0; c < C; ++c) {
        for (int d = 0; d < 7; ++d) amp[c][0][d] = 1.0;
        for (int w = 1; w < weeks; ++w)
            for (int d = 0; d < 7; ++d) {
                double a = amp[c][w - 1][d] + config.amp_walk * rng.normal();
                amp[c][w][d] = std::min(1.6, std::max(0.4, a));
            }
    }

    p.target_names = {"cases", "deaths"};
    p.targets.assign(static_cast<size_t>(C) * T * 2, 0.0);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            int dow = p.dates[t].weekday();
            double weekly = amp[c][t / 7][dow] * config.weekly_amplitude *
                            std::sin(2.0 * M_PI * dow / 7.0);
            double combo = 0.0;
            for (int f = 0; f < F; ++f) combo += config.feature_coeffs[f] * p.obs(c, t, f);
            double e1 = config.noise_std * rng.normal();
            double e2 = 0.5 * config.noise_std * rng.normal();
            p.tgt(c, t, 0) = base[c][t] + weekly + combo + e1;
            p.tgt(c, t, 1) = 0.15 * base[c][t] + 0.3 * weekly + 0.3 * combo + e2;
        }

    derive_known_future(p);
    p.validate();
    return p;
}

}  // namespace stsens
