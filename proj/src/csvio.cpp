#include "stsens/csvio.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace stsens {

long LoadReport::total_fills() const {
    long n = 0;
    for (const auto& [name, c] : zero_fills) n += c;
    return n;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_value(const std::string& s, const std::string& file, int lineno) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (...) {
        throw std::runtime_error(file + ":" + std::to_string(lineno) + ": malformed value '" + s + "'");
    }
}

// List of (feature name, path) for a directory of CSVs or a single file.
std::vector<std::pair<std::string, std::string>> feature_files(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> out;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.path().extension() == ".csv") out.emplace_back(e.path().stem().string(), e.path().string());
        }
        std::sort(out.begin(), out.end());
    } else if (fs::exists(path)) {
        out.emplace_back(fs::path(path).stem().string(), path);
    } else {
        throw std::runtime_error("no such file or directory: " + path);
    }
    if (out.empty()) throw std::runtime_error("no .csv files under " + path);
    return out;
}

// Loads one long-form series file into panel cells, zero-filling leading
// gaps. `cell` maps (county index, date index) to the destination value.
template <typename CellFn>
long load_series_file(const std::string& name, const std::string& path,
                      const std::map<std::string, int>& county_index, Date start, Date end, int T,
                      CellFn cell) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() != 3 || header[0] != "fips" || header[1] != "date" || header[2] != "value")
        throw std::runtime_error(path + ":1: expected header 'fips,date,value'");

    const int C = static_cast<int>(county_index.size());
    std::vector<std::vector<char>> present(C, std::vector<char>(T, 0));
    std::vector<std::vector<double>> vals(C, std::vector<double>(T, 0.0));
    std::set<std::string> unknown;

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 3)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row (want 3 fields, got " +
                                     std::to_string(f.size()) + ")");
        auto it = county_index.find(f[0]);
        if (it == county_index.end()) {
            unknown.insert(f[0]);
            continue;
        }
        Date d = [&] {
            try {
                return parse_date(f[1]);
            } catch (const std::exception& e) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }();
        if (d < start || d > end) continue;
        double v = parse_value(f[2], path, lineno);
        int t = d - start;
        if (present[it->second][t])
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate entry for " + f[0] +
                                     " " + d.iso());
        present[it->second][t] = 1;
        vals[it->second][t] = v;
    }
    if (!unknown.empty()) {
        std::string ids;
        for (const auto& id : unknown) ids += (ids.empty() ? "" : ", ") + id;
        throw std::runtime_error(path + ": counties absent from static file: " + ids);
    }

    long fills = 0;
    for (const auto& [id, c] : county_index) {
        int first = -1;
        for (int t = 0; t < T; ++t)
            if (present[c][t]) {
                first = t;
                break;
            }
        if (first < 0)
            throw std::runtime_error(path + ": county " + id + " has no data in range " + start.iso() +
                                     ".." + end.iso());
        for (int t = first; t < T; ++t)
            if (!present[c][t])
                throw std::runtime_error(path + ": county " + id + " missing date " + (start + t).iso());
        fills += first;  // cells before first availability, filled with 0.0
        for (int t = 0; t < T; ++t) cell(c, t) = vals[c][t];
    }
    return fills;
}

}  // namespace

std::pair<FeaturePanel, LoadReport> load_panel(const std::string& static_path,
                                               const std::string& dynamic_path,
                                               const std::string& target_path, Date start, Date end) {
    if (end < start) throw std::invalid_argument("load_panel: empty date range");
    FeaturePanel panel;
    LoadReport report;

    // static file fixes the county universe and order
    std::ifstream in(static_path);
    if (!in) throw std::runtime_error("cannot open " + static_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(static_path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "fips")
        throw std::runtime_error(static_path + ":1: expected header 'fips,<feature>,...'");
    panel.static_names.assign(header.begin() + 1, header.end());

    std::map<std::string, int> county_index;
    std::vector<std::vector<double>> stat_rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw std::runtime_error(static_path + ":" + std::to_string(lineno) + ": malformed row");
        if (county_index.count(f[0]))
            throw std::runtime_error(static_path + ":" + std::to_string(lineno) + ": duplicate county " + f[0]);
        county_index[f[0]] = static_cast<int>(panel.county_ids.size());
        panel.county_ids.push_back(f[0]);
        std::vector<double> row;
        for (size_t i = 1; i < f.size(); ++i) row.push_back(parse_value(f[i], static_path, lineno));
        stat_rows.push_back(std::move(row));
    }
    if (panel.county_ids.empty()) throw std::runtime_error(static_path + ": no counties");

    const int C = panel.C();
    const int T = end - start + 1;
    panel.dates.resize(T);
    for (int t = 0; t < T; ++t) panel.dates[t] = start + t;
    panel.statics.resize(static_cast<size_t>(C) * panel.n_static());
    for (int c = 0; c < C; ++c)
        for (int f = 0; f < panel.n_static(); ++f) panel.stat(c, f) = stat_rows[c][f];

    auto dyn_files = feature_files(dynamic_path);
    auto tgt_files = feature_files(target_path);
    for (const auto& [name, path] : dyn_files) panel.observed_names.push_back(name);
    for (const auto& [name, path] : tgt_files) panel.target_names.push_back(name);
    panel.observed.assign(static_cast<size_t>(C) * T * panel.n_observed(), 0.0);
    panel.targets.assign(static_cast<size_t>(C) * T * panel.n_target(), 0.0);

    for (int f = 0; f < panel.n_observed(); ++f) {
        long fills = load_series_file(dyn_files[f].first, dyn_files[f].second, county_index, start, end, T,
                                      [&](int c, int t) -> double& { return panel.obs(c, t, f); });
        report.zero_fills.emplace_back(dyn_files[f].first, fills);
    }
    for (int f = 0; f < panel.n_target(); ++f) {
        long fills = load_series_file(tgt_files[f].first, tgt_files[f].second, county_index, start, end, T,
                                      [&](int c, int t) -> double& { return panel.tgt(c, t, f); });
        report.zero_fills.emplace_back(tgt_files[f].first, fills);
    }

    panel.validate();
    return {std::move(panel), std::move(report)};
}

void write_static_csv(const FeaturePanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "fips";
    for (const auto& n : panel.static_names) out << "," << n;
    out << "\n";
    for (int c = 0; c < panel.C(); ++c) {
        out << panel.county_ids[c];
        for (int f = 0; f < panel.n_static(); ++f) out << "," << fmt_double(panel.stat(c, f));
        out << "\n";
    }
}

void write_series_csv(const FeaturePanel& panel, FeatureRole role, int feature_idx,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "fips,date,value\n";
    for (int c = 0; c < panel.C(); ++c)
        for (int t = 0; t < panel.T(); ++t) {
            double v = role == FeatureRole::Target ? panel.tgt(c, t, feature_idx)
                                                   : panel.obs(c, t, feature_idx);
            out << panel.county_ids[c] << "," << panel.dates[t].iso() << "," << fmt_double(v) << "\n";
        }
}

namespace {

constexpr char kPanelMagic[] = "STSPANEL1\n";

void put_string(std::ofstream& out, const std::string& s) {
    uint64_t n = s.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(s.data(), static_cast<std::streamsize>(n));
}

std::string get_string(std::ifstream& in) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n > (1ull << 30)) throw std::runtime_error("panel archive: corrupt string length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("panel archive: truncated string");
    return s;
}

void put_doubles(std::ofstream& out, const std::vector<double>& xs) {
    uint64_t n = xs.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(xs.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> get_doubles(std::ifstream& in) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n > (1ull << 32)) throw std::runtime_error("panel archive: corrupt array length");
    std::vector<double> xs(n);
    in.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("panel archive: truncated array");
    return xs;
}

void put_names(std::ofstream& out, const std::vector<std::string>& names) {
    uint64_t n = names.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& s : names) put_string(out, s);
}

std::vector<std::string> get_names(std::ifstream& in) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n > (1ull << 20)) throw std::runtime_error("panel archive: corrupt name count");
    std::vector<std::string> out(n);
    for (auto& s : out) s = get_string(in);
    return out;
}

}  // namespace

void save_panel_archive(const FeaturePanel& panel, const ScalerState& scaler,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kPanelMagic, sizeof(kPanelMagic) - 1);
    put_names(out, panel.county_ids);
    int64_t d0 = panel.dates.empty() ? 0 : panel.dates.front().serial;
    int64_t nT = panel.T();
    out.write(reinterpret_cast<const char*>(&d0), sizeof(d0));
    out.write(reinterpret_cast<const char*>(&nT), sizeof(nT));
    put_names(out, panel.static_names);
    put_names(out, panel.observed_names);
    put_names(out, panel.known_names);
    put_names(out, panel.target_names);
    put_doubles(out, panel.statics);
    put_doubles(out, panel.observed);
    put_doubles(out, panel.known);
    put_doubles(out, panel.targets);
    put_string(out, scaler.fitted_on);
    uint64_t nr = scaler.ranges.size();
    out.write(reinterpret_cast<const char*>(&nr), sizeof(nr));
    for (const auto& [name, mm] : scaler.ranges) {
        put_string(out, name);
        out.write(reinterpret_cast<const char*>(&mm.first), sizeof(double));
        out.write(reinterpret_cast<const char*>(&mm.second), sizeof(double));
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

std::pair<FeaturePanel, ScalerState> load_panel_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[sizeof(kPanelMagic)] = {0};
    in.read(magic, sizeof(kPanelMagic) - 1);
    if (!in || std::strncmp(magic, kPanelMagic, sizeof(kPanelMagic) - 1) != 0)
        throw std::runtime_error(path + ": not a panel archive (bad magic)");
    FeaturePanel panel;
    panel.county_ids = get_names(in);
    int64_t d0 = 0, nT = 0;
    in.read(reinterpret_cast<char*>(&d0), sizeof(d0));
    in.read(reinterpret_cast<char*>(&nT), sizeof(nT));
    if (!in || nT <= 0 || nT > (1 << 24)) throw std::runtime_error(path + ": corrupt date header");
    panel.dates.resize(nT);
    for (int64_t t = 0; t < nT; ++t) panel.dates[t] = Date(static_cast<int>(d0 + t));
    panel.static_names = get_names(in);
    panel.observed_names = get_names(in);
    panel.known_names = get_names(in);
    panel.target_names = get_names(in);
    panel.statics = get_doubles(in);
    panel.observed = get_doubles(in);
    panel.known = get_doubles(in);
    panel.targets = get_doubles(in);
    ScalerState scaler;
    scaler.fitted_on = get_string(in);
    uint64_t nr = 0;
    in.read(reinterpret_cast<char*>(&nr), sizeof(nr));
    if (!in || nr > (1ull << 20)) throw std::runtime_error(path + ": corrupt scaler header");
    for (uint64_t i = 0; i < nr; ++i) {
        std::string name = get_string(in);
        double lo = 0, hi = 0;
        in.read(reinterpret_cast<char*>(&lo), sizeof(lo));
        in.read(reinterpret_cast<char*>(&hi), sizeof(hi));
        if (!in) throw std::runtime_error(path + ": truncated scaler");
        scaler.ranges[name] = {lo, hi};
    }
    panel.validate();
    return {std::move(panel), std::move(scaler)};
}

void write_clean_report_csv(const CleanReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "feature,role,clipped,mean_before,std_before,mean_after,std_after,lower,upper\n";
    for (const auto& f : report.features) {
        out << f.name << "," << role_name(f.role) << "," << f.clipped << "," << fmt_double(f.mean_before)
            << "," << fmt_double(f.std_before) << "," << fmt_double(f.mean_after) << ","
            << fmt_double(f.std_after) << "," << fmt_double(f.bounds.lower) << ","
            << fmt_double(f.bounds.upper) << "\n";
    }
}

}  // namespace stsens
