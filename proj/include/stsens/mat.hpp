#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stsens {

// Dense row-major matrix of doubles. All model math runs on these.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
    }

    double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline std::string shape_str(const Mat& m) {
    return "[" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + "]";
}

inline void require_shape(const Mat& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw std::invalid_argument(std::string(what) + ": expected [" + std::to_string(r) + "x" +
                                    std::to_string(c) + "], got " + shape_str(m));
}

// out = a * b, optionally accumulating into out. ikj loop order keeps the
// inner loop contiguous over b's rows.
inline void matmul_into(Mat& out, const Mat& a, const Mat& b, bool accumulate = false) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: " + shape_str(a) + " * " + shape_str(b));
    if (out.rows != a.rows || out.cols != b.cols) out = Mat(a.rows, b.cols);
    if (!accumulate) out.fill(0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat out;
    matmul_into(out, a, b);
    return out;
}

// out += aᵀ * b
inline void matmul_tn_acc(Mat& out, const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: " + shape_str(a) + "ᵀ * " + shape_str(b));
    if (out.rows != a.cols || out.cols != b.cols) {
        out = Mat(a.cols, b.cols);
    }
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row(i);
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
}

// out += a * bᵀ
inline void matmul_nt_acc(Mat& out, const Mat& a, const Mat& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "ᵀ");
    if (out.rows != a.rows || out.cols != b.rows) {
        out = Mat(a.rows, b.rows);
    }
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            orow[j] += s;
        }
    }
}

inline Mat matmul_nt(const Mat& a, const Mat& b) {
    Mat out(a.rows, b.rows);
    matmul_nt_acc(out, a, b);
    return out;
}

}  // namespace stsens
