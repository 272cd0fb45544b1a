#pragma once

#include <functional>
#include <vector>

#include "stsens/mat.hpp"

namespace stsens {

struct Var {
    int id = -1;
};

// Reverse-mode tape over Mat values. Ops append nodes in topological order,
// so backward() is a single reverse sweep; each node's closure scatters its
// output gradient into its parents' gradients.
//
// One tape is built per window forward pass and thrown away (or reused via
// reset()) afterwards. With recording=false the ops still compute values but
// skip gradient storage and closures; that is the inference path.
class Tape {
public:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void()> back;
        const char* tag = nullptr;
    };

    bool recording = true;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void reset() { nodes_.clear(); }
    int size() const { return static_cast<int>(nodes_.size()); }

    const Mat& val(Var x) const { return nodes_[x.id].val; }
    Mat& grad(Var x) { return nodes_[x.id].grad; }
    const Mat& grad(Var x) const { return nodes_[x.id].grad; }

    Var leaf(Mat m, const char* tag = nullptr);

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * bᵀ
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_rowvec(Var a, Var row);  // broadcast [1xC] over rows of [RxC]
    Var mul_colvec(Var a, Var col);  // scale row i of [RxC] by col[i]

    Var elu(Var a);
    Var sigmoid(Var a);
    Var tanh_(Var a);

    Var layernorm(Var x, Var gamma, Var beta);
    Var softmax_rows(Var x);
    // Masked softmax for self-attention: row i is a distribution over
    // columns j <= i; entries above the diagonal are exactly zero.
    Var softmax_causal(Var logits);

    Var concat_cols(const std::vector<Var>& xs);
    Var slice_cols(Var a, int c0, int c1);
    Var concat_rows(const std::vector<Var>& xs);
    Var slice_rows(Var a, int r0, int r1);

    // mean of squared differences over all elements -> [1x1]
    Var mse(Var pred, const Mat& target);

    void backward(Var out);

    // Throws naming the tag of the first node holding a non-finite value.
    void check_finite_values() const;

private:
    std::vector<Node> nodes_;

    Var push(Mat val, const char* tag = nullptr);
    void set_back(Var v, std::function<void()> fn);
};

}  // namespace stsens
