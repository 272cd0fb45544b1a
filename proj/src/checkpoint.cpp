#include "stsens/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stsens {

namespace {

constexpr char kMagic[] = "STSCKPT1\n";

void put_u64(std::ofstream& out, uint64_t x) { out.write(reinterpret_cast<const char*>(&x), sizeof(x)); }

uint64_t get_u64(std::ifstream& in, const std::string& what) {
    uint64_t x = 0;
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
    return x;
}

void put_str(std::ofstream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::ifstream& in, const std::string& what) {
    uint64_t n = get_u64(in, what);
    if (n > (1ull << 24)) throw std::runtime_error("checkpoint: corrupt length for " + what);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
    return s;
}

void put_name_list(std::ofstream& out, const std::vector<std::string>& names) {
    put_u64(out, names.size());
    for (const auto& s : names) put_str(out, s);
}

std::vector<std::string> get_name_list(std::ifstream& in, const std::string& what) {
    uint64_t n = get_u64(in, what);
    if (n > (1ull << 20)) throw std::runtime_error("checkpoint: corrupt count for " + what);
    std::vector<std::string> out(n);
    for (auto& s : out) s = get_str(in, what);
    return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kMagic, sizeof(kMagic) - 1);

    const ModelConfig& c = ckpt.config;
    for (int64_t x : {static_cast<int64_t>(c.d_model), static_cast<int64_t>(c.heads),
                      static_cast<int64_t>(c.past_len), static_cast<int64_t>(c.horizon),
                      static_cast<int64_t>(c.n_static), static_cast<int64_t>(c.n_past),
                      static_cast<int64_t>(c.n_future), static_cast<int64_t>(c.n_target)})
        out.write(reinterpret_cast<const char*>(&x), sizeof(x));
    out.write(reinterpret_cast<const char*>(&c.dropout), sizeof(double));

    put_name_list(out, ckpt.static_names);
    put_name_list(out, ckpt.observed_names);
    put_name_list(out, ckpt.known_names);
    put_name_list(out, ckpt.target_names);

    put_str(out, ckpt.scaler.fitted_on);
    put_u64(out, ckpt.scaler.ranges.size());
    for (const auto& [name, mm] : ckpt.scaler.ranges) {
        put_str(out, name);
        out.write(reinterpret_cast<const char*>(&mm.first), sizeof(double));
        out.write(reinterpret_cast<const char*>(&mm.second), sizeof(double));
    }

    put_u64(out, ckpt.params.items.size());
    for (const auto& [name, m] : ckpt.params.items) {
        put_str(out, name);
        put_u64(out, static_cast<uint64_t>(m.rows));
        put_u64(out, static_cast<uint64_t>(m.cols));
        out.write(reinterpret_cast<const char*>(m.v.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[sizeof(kMagic)] = {0};
    in.read(magic, sizeof(kMagic) - 1);
    if (!in || std::strncmp(magic, kMagic, sizeof(kMagic) - 1) != 0)
        throw std::runtime_error(path + ": not a checkpoint of a supported version (bad magic)");

    Checkpoint ckpt;
    ModelConfig& c = ckpt.config;
    int64_t ints[8];
    in.read(reinterpret_cast<char*>(ints), sizeof(ints));
    if (!in) throw std::runtime_error("checkpoint: truncated config");
    c.d_model = static_cast<int>(ints[0]);
    c.heads = static_cast<int>(ints[1]);
    c.past_len = static_cast<int>(ints[2]);
    c.horizon = static_cast<int>(ints[3]);
    c.n_static = static_cast<int>(ints[4]);
    c.n_past = static_cast<int>(ints[5]);
    c.n_future = static_cast<int>(ints[6]);
    c.n_target = static_cast<int>(ints[7]);
    in.read(reinterpret_cast<char*>(&c.dropout), sizeof(double));
    if (!in) throw std::runtime_error("checkpoint: truncated config");
    c.validate();

    ckpt.static_names = get_name_list(in, "static names");
    ckpt.observed_names = get_name_list(in, "observed names");
    ckpt.known_names = get_name_list(in, "known names");
    ckpt.target_names = get_name_list(in, "target names");

    ckpt.scaler.fitted_on = get_str(in, "scaler id");
    uint64_t nr = get_u64(in, "scaler count");
    if (nr > (1ull << 20)) throw std::runtime_error("checkpoint: corrupt scaler count");
    for (uint64_t i = 0; i < nr; ++i) {
        std::string name = get_str(in, "scaler feature");
        double lo = 0, hi = 0;
        in.read(reinterpret_cast<char*>(&lo), sizeof(lo));
        in.read(reinterpret_cast<char*>(&hi), sizeof(hi));
        if (!in) throw std::runtime_error("checkpoint: truncated scaler");
        ckpt.scaler.ranges[name] = {lo, hi};
    }

    uint64_t np = get_u64(in, "parameter count");
    if (np > (1ull << 24)) throw std::runtime_error("checkpoint: corrupt parameter count");
    for (uint64_t i = 0; i < np; ++i) {
        std::string name = get_str(in, "parameter name");
        uint64_t rows = get_u64(in, "rows of " + name);
        uint64_t cols = get_u64(in, "cols of " + name);
        if (rows > (1ull << 24) || cols > (1ull << 24))
            throw std::runtime_error("checkpoint: corrupt shape for " + name);
        Mat& m = ckpt.params.add(name, static_cast<int>(rows), static_cast<int>(cols));
        in.read(reinterpret_cast<char*>(m.v.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated while reading " + name);
    }
    ckpt.params.check_finite();
    return ckpt;
}

}  // namespace stsens
