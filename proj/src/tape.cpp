#include "stsens/tape.hpp"

#include <cmath>
#include <memory>

namespace stsens {

Var Tape::push(Mat val, const char* tag) {
    Node n;
    n.val = std::move(val);
    if (recording) n.grad = Mat(n.val.rows, n.val.cols, 0.0);
    n.tag = tag;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_back(Var v, std::function<void()> fn) {
    if (recording) nodes_[v.id].back = std::move(fn);
}

Var Tape::leaf(Mat m, const char* tag) { return push(std::move(m), tag); }

Var Tape::matmul(Var a, Var b) {
    Var out = push(stsens::matmul(val(a), val(b)), "matmul");
    set_back(out, [this, a, b, out] {
        const Mat& dy = grad(out);
        matmul_nt_acc(grad(a), dy, val(b));   // da += dy * bᵀ
        matmul_tn_acc(grad(b), val(a), dy);   // db += aᵀ * dy
    });
    return out;
}

Var Tape::matmul_nt(Var a, Var b) {
    Var out = push(stsens::matmul_nt(val(a), val(b)), "matmul_nt");
    set_back(out, [this, a, b, out] {
        const Mat& dy = grad(out);
        matmul_into(grad(a), dy, val(b), true);  // da += dy * b
        matmul_tn_acc(grad(b), dy, val(a));      // db += dyᵀ * a
    });
    return out;
}

Var Tape::add(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
    Mat y = A;
    for (size_t i = 0; i < y.size(); ++i) y.v[i] += B.v[i];
    Var out = push(std::move(y), "add");
    set_back(out, [this, a, b, out] {
        const Mat& dy = grad(out);
        Mat& da = grad(a);
        Mat& db = grad(b);
        for (size_t i = 0; i < dy.size(); ++i) {
            da.v[i] += dy.v[i];
            db.v[i] += dy.v[i];
        }
    });
    return out;
}

Var Tape::sub(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
    Mat y = A;
    for (size_t i = 0; i < y.size(); ++i) y.v[i] -= B.v[i];
    Var out = push(std::move(y), "sub");
    set_back(out, [this, a, b, out] {
        const Mat& dy = grad(out);
        Mat& da = grad(a);
        Mat& db = grad(b);
        for (size_t i = 0; i < dy.size(); ++i) {
            da.v[i] += dy.v[i];
            db.v[i] -= dy.v[i];
        }
    });
    return out;
}

Var Tape::mul(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
    Mat y = A;
    for (size_t i = 0; i < y.size(); ++i) y.v[i] *= B.v[i];
    Var out = push(std::move(y), "mul");
    set_back(out, [this, a, b, out] {
        const Mat& dy = grad(out);
        const Mat& A = val(a);
        const Mat& B = val(b);
        Mat& da = grad(a);
        Mat& db = grad(b);
        for (size_t i = 0; i < dy.size(); ++i) {
            da.v[i] += dy.v[i] * B.v[i];
            db.v[i] += dy.v[i] * A.v[i];
        }
    });
    return out;
}

Var Tape::scale(Var a, double c) {
    Mat y = val(a);
    for (double& x : y.v) x *= c;
    Var out = push(std::move(y), "scale");
    set_back(out, [this, a, out, c] {
        const Mat& dy = grad(out);
        Mat& da = grad(a);
        for (size_t i = 0; i < dy.size(); ++i) da.v[i] += c * dy.v[i];
    });
    return out;
}

Var Tape::add_rowvec(Var a, Var row) {
    const Mat& A = val(a);
    const Mat& R = val(row);
    if (R.rows != 1 || R.cols != A.cols) throw std::invalid_argument("add_rowvec: shape mismatch");
    Mat y = A;
    for (int i = 0; i < y.rows; ++i) {
        double* yr = y.row(i);
        for (int j = 0; j < y.cols; ++j) yr[j] += R.v[j];
    }
    Var out = push(std::move(y), "add_rowvec");
    set_back(out, [this, a, row, out] {
        const Mat& dy = grad(out);
        Mat& da = grad(a);
        Mat& dr = grad(row);
        for (size_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i];
        for (int i = 0; i < dy.rows; ++i) {
            const double* dyr = dy.row(i);
            for (int j = 0; j < dy.cols; ++j) dr.v[j] += dyr[j];
        }
    });
    return out;
}

Var Tape::mul_colvec(Var a, Var col) {
    const Mat& A = val(a);
    const Mat& C = val(col);
    if (C.cols != 1 || C.rows != A.rows) throw std::invalid_argument("mul_colvec: shape mismatch");
    Mat y = A;
    for (int i = 0; i < y.rows; ++i) {
        double w = C.v[i];
        double* yr = y.row(i);
        for (int j = 0; j < y.cols; ++j) yr[j] *= w;
    }
    Var out = push(std::move(y), "mul_colvec");
    set_back(out, [this, a, col, out] {
        const Mat& dy = grad(out);
        const Mat& A = val(a);
        const Mat& C = val(col);
        Mat& da = grad(a);
        Mat& dc = grad(col);
        for (int i = 0; i < dy.rows; ++i) {
            const double w = C.v[i];
            const double* dyr = dy.row(i);
            const double* ar = A.row(i);
            double* dar = da.row(i);
            double s = 0.0;
            for (int j = 0; j < dy.cols; ++j) {
                dar[j] += dyr[j] * w;
                s += dyr[j] * ar[j];
            }
            dc.v[i] += s;
        }
    });
    return out;
}

Var Tape::elu(Var a) {
    Mat y = val(a);
    for (double& x : y.v) x = x > 0.0 ? x : std::expm1(x);
    Var out = push(std::move(y), "elu");
    set_back(out, [this, a, out] {
        const Mat& dy = grad(out);
        const Mat& Y = val(out);
        Mat& da = grad(a);
        for (size_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i] * (Y.v[i] > 0.0 ? 1.0 : Y.v[i] + 1.0);
    });
    return out;
}

Var Tape::sigmoid(Var a) {
    Mat y = val(a);
    for (double& x : y.v) x = 1.0 / (1.0 + std::exp(-x));
    Var out = push(std::move(y), "sigmoid");
    set_back(out, [this, a, out] {
        const Mat& dy = grad(out);
        const Mat& Y = val(out);
        Mat& da = grad(a);
        for (size_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i] * Y.v[i] * (1.0 - Y.v[i]);
    });
    return out;
}

Var Tape::tanh_(Var a) {
    Mat y = val(a);
    for (double& x : y.v) x = std::tanh(x);
    Var out = push(std::move(y), "tanh");
    set_back(out, [this, a, out] {
        const Mat& dy = grad(out);
        const Mat& Y = val(out);
        Mat& da = grad(a);
        for (size_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i] * (1.0 - Y.v[i] * Y.v[i]);
    });
    return out;
}

Var Tape::layernorm(Var x, Var gamma, Var beta) {
    constexpr double kEps = 1e-3;
    const Mat& X = val(x);
    const Mat& G = val(gamma);
    const Mat& B = val(beta);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
        throw std::invalid_argument("layernorm: parameter shape mismatch");

    auto xhat = std::make_shared<Mat>(X.rows, X.cols);
    auto inv_std = std::make_shared<std::vector<double>>(X.rows);
    Mat y(X.rows, X.cols);
    const int C = X.cols;
    for (int i = 0; i < X.rows; ++i) {
        const double* xr = X.row(i);
        double mean = 0.0;
        for (int j = 0; j < C; ++j) mean += xr[j];
        mean /= C;
        double var = 0.0;
        for (int j = 0; j < C; ++j) {
            double d = xr[j] - mean;
            var += d * d;
        }
        var /= C;
        double inv = 1.0 / std::sqrt(var + kEps);
        (*inv_std)[i] = inv;
        double* hr = xhat->row(i);
        double* yr = y.row(i);
        for (int j = 0; j < C; ++j) {
            hr[j] = (xr[j] - mean) * inv;
            yr[j] = hr[j] * G.v[j] + B.v[j];
        }
    }
    Var out = push(std::move(y), "layernorm");
    set_back(out, [this, x, gamma, beta, out, xhat, inv_std] {
        const Mat& dy = grad(out);
        const Mat& G = val(gamma);
        Mat& dx = grad(x);
        Mat& dg = grad(gamma);
        Mat& db = grad(beta);
        const int C = dy.cols;
        for (int i = 0; i < dy.rows; ++i) {
            const double* dyr = dy.row(i);
            const double* hr = xhat->row(i);
            const double inv = (*inv_std)[i];
            double mean_dxh = 0.0, mean_dxh_h = 0.0;
            for (int j = 0; j < C; ++j) {
                const double dxh = dyr[j] * G.v[j];
                mean_dxh += dxh;
                mean_dxh_h += dxh * hr[j];
                dg.v[j] += dyr[j] * hr[j];
                db.v[j] += dyr[j];
            }
            mean_dxh /= C;
            mean_dxh_h /= C;
            double* dxr = dx.row(i);
            for (int j = 0; j < C; ++j) {
                const double dxh = dyr[j] * G.v[j];
                dxr[j] += inv * (dxh - mean_dxh - hr[j] * mean_dxh_h);
            }
        }
    });
    return out;
}

Var Tape::softmax_rows(Var x) {
    const Mat& X = val(x);
    Mat y(X.rows, X.cols);
    for (int i = 0; i < X.rows; ++i) {
        const double* xr = X.row(i);
        double m = xr[0];
        for (int j = 1; j < X.cols; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        double* yr = y.row(i);
        for (int j = 0; j < X.cols; ++j) {
            yr[j] = std::exp(xr[j] - m);
            s += yr[j];
        }
        for (int j = 0; j < X.cols; ++j) yr[j] /= s;
    }
    Var out = push(std::move(y), "softmax");
    set_back(out, [this, x, out] {
        const Mat& dy = grad(out);
        const Mat& Y = val(out);
        Mat& dx = grad(x);
        for (int i = 0; i < dy.rows; ++i) {
            const double* dyr = dy.row(i);
            const double* yr = Y.row(i);
            double dot = 0.0;
            for (int j = 0; j < dy.cols; ++j) dot += dyr[j] * yr[j];
            double* dxr = dx.row(i);
            for (int j = 0; j < dy.cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
        }
    });
    return out;
}

Var Tape::softmax_causal(Var logits) {
    const Mat& X = val(logits);
    if (X.rows != X.cols) throw std::invalid_argument("softmax_causal: matrix must be square");
    Mat y(X.rows, X.cols, 0.0);
    for (int i = 0; i < X.rows; ++i) {
        const double* xr = X.row(i);
        double m = xr[0];
        for (int j = 1; j <= i; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        double* yr = y.row(i);
        for (int j = 0; j <= i; ++j) {
            yr[j] = std::exp(xr[j] - m);
            s += yr[j];
        }
        for (int j = 0; j <= i; ++j) yr[j] /= s;
    }
    Var out = push(std::move(y), "softmax_causal");
    set_back(out, [this, logits, out] {
        const Mat& dy = grad(out);
        const Mat& Y = val(out);
        Mat& dx = grad(logits);
        for (int i = 0; i < dy.rows; ++i) {
            const double* dyr = dy.row(i);
            const double* yr = Y.row(i);
            double dot = 0.0;
            for (int j = 0; j <= i; ++j) dot += dyr[j] * yr[j];
            double* dxr = dx.row(i);
            for (int j = 0; j <= i; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
        }
    });
    return out;
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
    int rows = val(xs[0]).rows;
    int cols = 0;
    for (Var x : xs) {
        if (val(x).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += val(x).cols;
    }
    Mat y(rows, cols);
    int off = 0;
    for (Var x : xs) {
        const Mat& X = val(x);
        for (int i = 0; i < rows; ++i) {
            const double* xr = X.row(i);
            double* yr = y.row(i) + off;
            for (int j = 0; j < X.cols; ++j) yr[j] = xr[j];
        }
        off += X.cols;
    }
    Var out = push(std::move(y), "concat_cols");
    auto parts = xs;
    set_back(out, [this, parts, out] {
        const Mat& dy = grad(out);
        int off = 0;
        for (Var x : parts) {
            Mat& dx = grad(x);
            for (int i = 0; i < dy.rows; ++i) {
                const double* dyr = dy.row(i) + off;
                double* dxr = dx.row(i);
                for (int j = 0; j < dx.cols; ++j) dxr[j] += dyr[j];
            }
            off += dx.cols;
        }
    });
    return out;
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Mat& A = val(a);
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Mat y(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i) {
        const double* ar = A.row(i) + c0;
        double* yr = y.row(i);
        for (int j = 0; j < y.cols; ++j) yr[j] = ar[j];
    }
    Var out = push(std::move(y), "slice_cols");
    set_back(out, [this, a, out, c0] {
        const Mat& dy = grad(out);
        Mat& da = grad(a);
        for (int i = 0; i < dy.rows; ++i) {
            const double* dyr = dy.row(i);
            double* dar = da.row(i) + c0;
            for (int j = 0; j < dy.cols; ++j) dar[j] += dyr[j];
        }
    });
    return out;
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty");
    int cols = val(xs[0]).cols;
    int rows = 0;
    for (Var x : xs) {
        if (val(x).cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += val(x).rows;
    }
    Mat y(rows, cols);
    int off = 0;
    for (Var x : xs) {
        const Mat& X = val(x);
        for (int i = 0; i < X.rows; ++i) {
            const double* xr = X.row(i);
            double* yr = y.row(off + i);
            for (int j = 0; j < cols; ++j) yr[j] = xr[j];
        }
        off += X.rows;
    }
    Var out = push(std::move(y), "concat_rows");
    auto parts = xs;
    set_back(out, [this, parts, out] {
        const Mat& dy = grad(out);
        int off = 0;
        for (Var x : parts) {
            Mat& dx = grad(x);
            for (int i = 0; i < dx.rows; ++i) {
                const double* dyr = dy.row(off + i);
                double* dxr = dx.row(i);
                for (int j = 0; j < dx.cols; ++j) dxr[j] += dyr[j];
            }
            off += dx.rows;
        }
    });
    return out;
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Mat& A = val(a);
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    Mat y(r1 - r0, A.cols);
    for (int i = 0; i < y.rows; ++i) {
        const double* ar = A.row(r0 + i);
        double* yr = y.row(i);
        for (int j = 0; j < y.cols; ++j) yr[j] = ar[j];
    }
    Var out = push(std::move(y), "slice_rows");
    set_back(out, [this, a, out, r0] {
        const Mat& dy = grad(out);
        Mat& da = grad(a);
        for (int i = 0; i < dy.rows; ++i) {
            const double* dyr = dy.row(i);
            double* dar = da.row(r0 + i);
            for (int j = 0; j < dy.cols; ++j) dar[j] += dyr[j];
        }
    });
    return out;
}

Var Tape::mse(Var pred, const Mat& target) {
    const Mat& P = val(pred);
    if (!P.same_shape(target))
        throw std::invalid_argument("mse: shape mismatch " + shape_str(P) + " vs " + shape_str(target));
    const double n = static_cast<double>(P.size());
    double s = 0.0;
    for (size_t i = 0; i < P.size(); ++i) {
        double d = P.v[i] - target.v[i];
        s += d * d;
    }
    Mat y(1, 1);
    y.v[0] = s / n;
    Var out = push(std::move(y), "mse");
    auto tgt = std::make_shared<Mat>(target);
    set_back(out, [this, pred, out, tgt, n] {
        const double dy = grad(out).v[0];
        const Mat& P = val(pred);
        Mat& dp = grad(pred);
        const double c = 2.0 * dy / n;
        for (size_t i = 0; i < P.size(); ++i) dp.v[i] += c * (P.v[i] - tgt->v[i]);
    });
    return out;
}

void Tape::backward(Var out) {
    if (!recording) throw std::logic_error("backward on a non-recording tape");
    Node& o = nodes_[out.id];
    if (o.val.size() != 1) throw std::invalid_argument("backward: output must be scalar");
    o.grad.v[0] = 1.0;
    for (int i = out.id; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back();
    }
}

void Tape::check_finite_values() const {
    for (const Node& n : nodes_) {
        for (double x : n.val.v) {
            if (!std::isfinite(x)) {
                throw std::runtime_error(std::string("non-finite value in layer '") +
                                         (n.tag ? n.tag : "?") + "'");
            }
        }
    }
}

}  // namespace stsens
