#include "stsens/runconfig.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace stsens {

const char* kVersion = "0.1.0";

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "run.seed",
        "out.dir",
        "data.static", "data.dynamic", "data.targets", "data.start", "data.end",
        "synth.counties", "synth.days", "synth.seed", "synth.weekly_amplitude", "synth.noise_std",
        "synth.feature_coeffs", "synth.start_date", "synth.base_min", "synth.base_max",
        "synth.base_drift", "synth.amp_walk",
        "split.mode", "split.train_start", "split.train_end", "split.val_start", "split.val_end",
        "split.test_start", "split.test_end",
        "prepare.multiplier",
        "window.past", "window.horizon",
        "model.d_model", "model.heads", "model.dropout",
        "train.panel", "train.learning_rate", "train.batch_size", "train.max_epochs",
        "train.patience", "train.grad_clip_norm",
        "grid.learning_rates", "grid.hidden_sizes", "grid.head_counts", "grid.clip_norms",
        "eval.panel", "eval.checkpoint",
        "attention.panel", "attention.checkpoint",
        "morris.panel", "morris.raw_panel", "morris.checkpoint", "morris.features", "morris.deltas",
        "morris.target", "morris.start", "morris.end", "morris.subgroups",
        "morris.subgroup_dynamic",
    };
    return keys;
}

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!known_keys().count(key))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown config key '" +
                                     key + "'");
        cfg.kv[key] = val;
    }
    return cfg;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("missing required config key '" + key + "'");
    return it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': bad number '" + it->second + "'");
    }
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

Date RunConfig::get_date(const std::string& key) const {
    return parse_date(require(key));
}

Date RunConfig::get_date(const std::string& key, Date fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : parse_date(it->second);
}

std::vector<double> RunConfig::get_double_list(const std::string& key,
                                               const std::vector<double>& fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ','))
        try {
            out.push_back(std::stod(trim(tok)));
        } catch (...) {
            throw std::runtime_error("config key '" + key + "': bad number '" + tok + "'");
        }
    return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ','))
        try {
            out.push_back(std::stoi(trim(tok)));
        } catch (...) {
            throw std::runtime_error("config key '" + key + "': bad integer '" + tok + "'");
        }
    return out;
}

std::vector<std::string> RunConfig::get_str_list(const std::string& key) const {
    auto it = kv.find(key);
    std::vector<std::string> out;
    if (it == kv.end()) return out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

SynthConfig RunConfig::synth_config(uint64_t seed) const {
    SynthConfig sc;
    sc.counties = get_int("synth.counties", sc.counties);
    sc.days = get_int("synth.days", sc.days);
    sc.seed = get_u64("synth.seed", seed);
    sc.weekly_amplitude = get_double("synth.weekly_amplitude", sc.weekly_amplitude);
    sc.noise_std = get_double("synth.noise_std", sc.noise_std);
    sc.feature_coeffs = get_double_list("synth.feature_coeffs", sc.feature_coeffs);
    sc.start_date = get_date("synth.start_date", sc.start_date);
    sc.base_min = get_double("synth.base_min", sc.base_min);
    sc.base_max = get_double("synth.base_max", sc.base_max);
    sc.base_drift = get_double("synth.base_drift", sc.base_drift);
    sc.amp_walk = get_double("synth.amp_walk", sc.amp_walk);
    return sc;
}

WindowSpec RunConfig::window_spec() const {
    WindowSpec w;
    w.past_len = get_int("window.past", 13);
    w.horizon = get_int("window.horizon", 15);
    return w;
}

SplitSpec RunConfig::split_spec() const {
    std::string mode = get("split.mode", "custom");
    if (mode == "primary") return primary_split();
    if (mode != "custom") throw std::runtime_error("split.mode must be 'primary' or 'custom'");
    SplitSpec s;
    s.train = {get_date("split.train_start"), get_date("split.train_end")};
    s.validation = {get_date("split.val_start"), get_date("split.val_end")};
    s.test = {get_date("split.test_start"), get_date("split.test_end")};
    s.validate();
    return s;
}

std::string make_run_dir(const std::string& out_dir, const std::string& command, uint64_t seed) {
    auto now = std::chrono::system_clock::now();
    std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
    fs::create_directories(out_dir);
    std::string base = out_dir + "/" + command + "-" + stamp + "-" + std::to_string(seed);
    std::string dir = base;
    for (int n = 1; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);
    fs::create_directories(dir);
    return dir;
}

void write_manifest(const std::string& run_dir, const std::string& command, const RunConfig& cfg,
                    uint64_t seed) {
    std::ofstream out(run_dir + "/manifest.txt");
    if (!out) throw std::runtime_error("cannot write manifest in " + run_dir);
    out << "command=" << command << "\n";
    out << "version=" << kVersion << "\n";
    out << "seed=" << seed << "\n";
    for (const auto& [k, v] : cfg.kv) out << k << "=" << v << "\n";
}

}  // namespace stsens
