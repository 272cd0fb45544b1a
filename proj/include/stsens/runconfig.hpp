#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stsens/dates.hpp"
#include "stsens/synthetic.hpp"
#include "stsens/windows.hpp"

namespace stsens {

// Flat key=value run configuration with dotted sections
// (train.learning_rate=1e-3). Unknown keys are rejected by name.
struct RunConfig {
    std::map<std::string, std::string> kv;

    static RunConfig from_file(const std::string& path);

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    Date get_date(const std::string& key) const;  // throws when missing
    Date get_date(const std::string& key, Date fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<std::string> get_str_list(const std::string& key) const;

    SynthConfig synth_config(uint64_t seed) const;
    WindowSpec window_spec() const;
    // split.mode=primary uses the published dates; custom reads the six
    // split.* date keys.
    SplitSpec split_spec() const;
};

// Creates <out_dir>/<command>-<UTC timestamp>-<seed>[-n] and returns its
// path.
std::string make_run_dir(const std::string& out_dir, const std::string& command, uint64_t seed);

// Writes the resolved configuration, seed and version into
// <run_dir>/manifest.txt.
void write_manifest(const std::string& run_dir, const std::string& command, const RunConfig& cfg,
                    uint64_t seed);

extern const char* kVersion;

}  // namespace stsens
