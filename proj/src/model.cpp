#include "stsens/model.hpp"

#include <cmath>
#include <stdexcept>

namespace stsens {

void ModelConfig::validate() const {
    if (d_model < 1) throw std::invalid_argument("model: d_model must be positive");
    if (heads < 1 || d_model % heads != 0)
        throw std::invalid_argument("model: d_model must be divisible by the head count");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model: dropout must be in [0,1)");
    if (past_len < 1 || horizon < 1) throw std::invalid_argument("model: window lengths must be positive");
    if (n_past < 1 || n_future < 1 || n_target < 1)
        throw std::invalid_argument("model: feature counts incomplete");
}

ModelConfig ModelConfig::for_panel(const FeaturePanel& panel, const WindowSpec& spec, int d_model,
                                   int heads, double dropout) {
    ModelConfig cfg;
    cfg.d_model = d_model;
    cfg.heads = heads;
    cfg.dropout = dropout;
    cfg.past_len = spec.past_len;
    cfg.horizon = spec.horizon;
    cfg.n_static = panel.n_static();
    cfg.n_past = panel.n_target() + panel.n_observed() + panel.n_known();
    cfg.n_future = panel.n_known();
    cfg.n_target = panel.n_target();
    cfg.validate();
    return cfg;
}

Mat& ParamSet::add(const std::string& name, int rows, int cols) {
    if (index.count(name)) throw std::logic_error("duplicate parameter " + name);
    index[name] = static_cast<int>(items.size());
    items.emplace_back(name, Mat(rows, cols));
    return items.back().second;
}

const Mat& ParamSet::at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("unknown parameter " + name);
    return items[it->second].second;
}

Mat& ParamSet::at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("unknown parameter " + name);
    return items[it->second].second;
}

size_t ParamSet::total_values() const {
    size_t n = 0;
    for (const auto& [name, m] : items) n += m.size();
    return n;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& [name, m] : items) out.add(name, m.rows, m.cols);
    return out;
}

void ParamSet::check_finite() const {
    for (const auto& [name, m] : items)
        for (double x : m.v)
            if (!std::isfinite(x)) throw std::runtime_error("non-finite values in '" + name + "'");
}

namespace {

// Registers one GRN's parameter group.
void add_grn(ParamSet& p, const std::string& prefix, int in, int hid, int out, bool has_context) {
    p.add(prefix + ".w1", in, hid);
    p.add(prefix + ".b1", 1, hid);
    if (has_context) p.add(prefix + ".wc", hid, hid);  // context is always d_model wide == hid here
    p.add(prefix + ".w2", hid, out);
    p.add(prefix + ".b2", 1, out);
    p.add(prefix + ".wg", out, out);
    p.add(prefix + ".bg", 1, out);
    if (in != out) {
        p.add(prefix + ".ws", in, out);
        p.add(prefix + ".bs", 1, out);
    }
    p.add(prefix + ".ln_g", 1, out);
    p.add(prefix + ".ln_b", 1, out);
}

void add_gate(ParamSet& p, const std::string& prefix, int d) {
    p.add(prefix + ".wg", d, d);
    p.add(prefix + ".bg", 1, d);
    p.add(prefix + ".ln_g", 1, d);
    p.add(prefix + ".ln_b", 1, d);
}

void add_vsn(ParamSet& p, const std::string& prefix, int F, int d, bool has_context) {
    add_grn(p, prefix + ".sel", F * d, d, F, has_context);
    for (int f = 0; f < F; ++f) add_grn(p, prefix + ".f" + std::to_string(f), d, d, d, false);
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    const int d = cfg.d_model;
    ParamSet p;

    for (int f = 0; f < cfg.n_past; ++f) {
        p.add("emb_w." + std::to_string(f), 1, d);
        p.add("emb_b." + std::to_string(f), 1, d);
    }
    for (int f = 0; f < cfg.n_static; ++f) {
        p.add("stat_emb_w." + std::to_string(f), 1, d);
        p.add("stat_emb_b." + std::to_string(f), 1, d);
    }

    if (cfg.n_static > 0) add_vsn(p, "vsn_stat", cfg.n_static, d, false);
    for (const char* name : {"ctx_sel", "ctx_cell", "ctx_hidden", "ctx_enrich"})
        add_grn(p, name, d, d, d, false);

    add_vsn(p, "vsn_past", cfg.n_past, d, true);
    add_vsn(p, "vsn_fut", cfg.n_future, d, true);

    for (const char* name : {"lstm_enc", "lstm_dec"}) {
        p.add(std::string(name) + ".wx", d, 4 * d);
        p.add(std::string(name) + ".wh", d, 4 * d);
        p.add(std::string(name) + ".b", 1, 4 * d);
    }
    add_gate(p, "gate_lstm", d);

    add_grn(p, "enrich", d, d, d, true);

    for (int h = 0; h < cfg.heads; ++h) {
        p.add("attn.wq" + std::to_string(h), d, cfg.d_attn());
        p.add("attn.wk" + std::to_string(h), d, cfg.d_attn());
    }
    p.add("attn.wv", d, cfg.d_value());
    p.add("attn.wh", cfg.d_value(), d);
    add_gate(p, "gate_attn", d);

    add_grn(p, "poswise", d, d, d, false);
    add_gate(p, "gate_final", d);

    p.add("head.w", d, cfg.n_target);
    p.add("head.b", 1, cfg.n_target);

    // scaled-uniform init in registration order; biases zero, LN gain one
    Rng rng(seed);
    for (auto& [name, m] : p.items) {
        auto ends_with = [&](const char* suf) {
            size_t n = std::string(suf).size();
            return name.size() >= n && name.compare(name.size() - n, n, suf) == 0;
        };
        bool is_bias = ends_with(".b") || ends_with(".b1") || ends_with(".b2") || ends_with(".bg") ||
                       ends_with(".bs") || ends_with(".ln_b") || name.rfind("emb_b", 0) == 0 ||
                       name.rfind("stat_emb_b", 0) == 0 || name.rfind("head.b", 0) == 0;
        if (ends_with(".ln_g")) {
            m.fill(1.0);
        } else if (is_bias) {
            m.fill(0.0);
        } else {
            double bound = 1.0 / std::sqrt(static_cast<double>(m.rows));
            for (double& x : m.v) x = rng.uniform(-bound, bound);
        }
    }
    return p;
}

Var TapeBinding::operator()(const std::string& name) const {
    auto it = params->index.find(name);
    if (it == params->index.end()) throw std::logic_error("unknown parameter " + name);
    return vars[it->second];
}

void TapeBinding::accumulate_grads(const Tape& tape, ParamSet& grads_out, double scale_factor) const {
    for (size_t i = 0; i < vars.size(); ++i) {
        const Mat& g = tape.grad(vars[i]);
        Mat& dst = grads_out.items[i].second;
        for (size_t j = 0; j < g.size(); ++j) dst.v[j] += scale_factor * g.v[j];
    }
}

TapeBinding bind_params(Tape& tape, const ParamSet& params) {
    TapeBinding b;
    b.params = &params;
    b.vars.reserve(params.items.size());
    for (const auto& [name, m] : params.items) b.vars.push_back(tape.leaf(m, "param"));
    return b;
}

namespace {

Var affine(Tape& tape, Var x, Var w, Var b) { return tape.add_rowvec(tape.matmul(x, w), b); }

Var dropout_mask(Tape& tape, Var x, double p, Rng* rng) {
    const Mat& X = tape.val(x);
    Mat mask(X.rows, X.cols);
    const double keep = 1.0 - p;
    for (double& m : mask.v) m = rng->next_double() < p ? 0.0 : 1.0 / keep;
    return tape.mul(x, tape.leaf(std::move(mask), "dropout"));
}

}  // namespace

Var grn_forward(Tape& tape, const TapeBinding& P, const std::string& prefix, Var x,
                std::optional<Var> context, bool train_mode, double dropout, Rng* rng) {
    Var h = affine(tape, x, P(prefix + ".w1"), P(prefix + ".b1"));
    if (context) {
        Var cterm = tape.matmul(*context, P(prefix + ".wc"));  // [1 x hid]
        h = tape.add_rowvec(h, cterm);
    }
    h = tape.elu(h);
    if (train_mode && dropout > 0.0) h = dropout_mask(tape, h, dropout, rng);
    Var z = affine(tape, h, P(prefix + ".w2"), P(prefix + ".b2"));
    Var gate = tape.sigmoid(affine(tape, z, P(prefix + ".wg"), P(prefix + ".bg")));
    Var gated = tape.mul(gate, z);
    Var skip = P.params->has(prefix + ".ws") ? affine(tape, x, P(prefix + ".ws"), P(prefix + ".bs")) : x;
    return tape.layernorm(tape.add(skip, gated), P(prefix + ".ln_g"), P(prefix + ".ln_b"));
}

VsnOut vsn_forward(Tape& tape, const TapeBinding& P, const std::string& prefix,
                   const std::vector<Var>& feature_embeddings, std::optional<Var> context,
                   bool train_mode, double dropout, Rng* rng) {
    if (feature_embeddings.empty()) throw std::invalid_argument("vsn: no features");
    Var flat = feature_embeddings.size() == 1 ? feature_embeddings[0]
                                              : tape.concat_cols(feature_embeddings);
    Var logits = grn_forward(tape, P, prefix + ".sel", flat, context, train_mode, dropout, rng);
    Var weights = tape.softmax_rows(logits);
    Var combined;
    for (size_t f = 0; f < feature_embeddings.size(); ++f) {
        Var gf = grn_forward(tape, P, prefix + ".f" + std::to_string(f), feature_embeddings[f],
                             std::nullopt, train_mode, dropout, rng);
        Var wf = tape.slice_cols(weights, static_cast<int>(f), static_cast<int>(f) + 1);
        Var term = tape.mul_colvec(gf, wf);
        combined = f == 0 ? term : tape.add(combined, term);
    }
    return {combined, weights};
}

Mat causal_mask(int n) {
    Mat m(n, n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) m(i, j) = 1.0;
    return m;
}

MhaOut interpretable_mha(Tape& tape, const TapeBinding& P, Var q, Var k, Var v, const Mat& mask) {
    const Mat& Q = tape.val(q);
    if (mask.rows != Q.rows || mask.cols != Q.rows)
        throw std::invalid_argument("mha: mask shape mismatch");
    for (int i = 0; i < mask.rows; ++i)
        for (int j = 0; j < mask.cols; ++j) {
            bool allowed = mask(i, j) != 0.0;
            if (allowed != (j <= i))
                throw std::invalid_argument("mha: mask is not causal at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
        }

    int heads = 0;
    while (P.params->has("attn.wq" + std::to_string(heads))) ++heads;
    const int d_attn = P.params->at("attn.wq0").cols;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_attn));

    MhaOut out;
    Var sum;
    for (int h = 0; h < heads; ++h) {
        Var qh = tape.matmul(q, P("attn.wq" + std::to_string(h)));
        Var kh = tape.matmul(k, P("attn.wk" + std::to_string(h)));
        Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        Var attn = tape.softmax_causal(scores);
        out.head_attention.push_back(attn);
        sum = h == 0 ? attn : tape.add(sum, attn);
    }
    Var mean_attn = tape.scale(sum, 1.0 / static_cast<double>(heads));
    Var vv = tape.matmul(v, P("attn.wv"));
    out.output = tape.matmul(tape.matmul(mean_attn, vv), P("attn.wh"));
    return out;
}

namespace {

// Per-feature linear embeddings of a sequence: column f of `seq` becomes
// [S x d] via an outer product with the feature's embedding row.
std::vector<Var> embed_columns(Tape& tape, const TapeBinding& P, Var seq, const std::string& w_prefix,
                               const std::string& b_prefix, int F, int col_offset = 0) {
    std::vector<Var> out;
    out.reserve(F);
    for (int f = 0; f < F; ++f) {
        Var col = tape.slice_cols(seq, col_offset + f, col_offset + f + 1);  // [S x 1]
        Var e = tape.matmul(col, P(w_prefix + std::to_string(f)));
        out.push_back(tape.add_rowvec(e, P(b_prefix + std::to_string(f))));
    }
    return out;
}

// One LSTM pass; h0/c0 are [1 x d]. Returns the stacked hidden states and
// leaves the final (h, c) in the in/out arguments.
Var lstm_run(Tape& tape, const TapeBinding& P, const std::string& prefix, Var seq, Var& h, Var& c) {
    const int S = tape.val(seq).rows;
    const int d = tape.val(h).cols;
    Var wx = P(prefix + ".wx"), wh = P(prefix + ".wh"), b = P(prefix + ".b");
    std::vector<Var> hs;
    hs.reserve(S);
    for (int t = 0; t < S; ++t) {
        Var xt = tape.slice_rows(seq, t, t + 1);
        Var z = tape.add_rowvec(tape.add(tape.matmul(xt, wx), tape.matmul(h, wh)), b);
        Var ig = tape.sigmoid(tape.slice_cols(z, 0, d));
        Var fg = tape.sigmoid(tape.slice_cols(z, d, 2 * d));
        Var gg = tape.tanh_(tape.slice_cols(z, 2 * d, 3 * d));
        Var og = tape.sigmoid(tape.slice_cols(z, 3 * d, 4 * d));
        c = tape.add(tape.mul(fg, c), tape.mul(ig, gg));
        h = tape.mul(og, tape.tanh_(c));
        hs.push_back(h);
    }
    return tape.concat_rows(hs);
}

Var gate_block(Tape& tape, const TapeBinding& P, const std::string& prefix, Var x, Var skip) {
    Var gate = tape.sigmoid(affine(tape, x, P(prefix + ".wg"), P(prefix + ".bg")));
    Var gated = tape.mul(gate, x);
    return tape.layernorm(tape.add(skip, gated), P(prefix + ".ln_g"), P(prefix + ".ln_b"));
}

}  // namespace

WindowForward tft_forward(Tape& tape, const TapeBinding& P, const ModelConfig& cfg,
                          const WindowData& window, bool train_mode, Rng* dropout_rng) {
    if (window.past.rows != cfg.past_len || window.past.cols != cfg.n_past ||
        window.future.rows != cfg.horizon || window.future.cols != cfg.n_future ||
        window.statics.cols != cfg.n_static)
        throw std::invalid_argument("tft_forward: window does not match model config (past " +
                                    shape_str(window.past) + ", future " + shape_str(window.future) +
                                    ", static " + shape_str(window.statics) + ")");
    if (train_mode && cfg.dropout > 0.0 && dropout_rng == nullptr)
        throw std::invalid_argument("tft_forward: train mode needs a dropout rng");

    const double drop = cfg.dropout;
    Rng* rng = dropout_rng;
    WindowForward out;

    // static covariates -> selection vector and the four context vectors
    Var zeta;
    if (cfg.n_static > 0) {
        Var stat_leaf = tape.leaf(window.statics, "static_input");
        auto embs = embed_columns(tape, P, stat_leaf, "stat_emb_w.", "stat_emb_b.", cfg.n_static);
        VsnOut sv = vsn_forward(tape, P, "vsn_stat", embs, std::nullopt, train_mode, drop, rng);
        zeta = sv.combined;
        out.vsn_static_weights = sv.weights;
    } else {
        zeta = tape.leaf(Mat(1, cfg.d_model, 0.0), "static_zero");
        out.vsn_static_weights = tape.leaf(Mat(1, 0), "static_zero_w");
    }
    Var c_sel = grn_forward(tape, P, "ctx_sel", zeta, std::nullopt, train_mode, drop, rng);
    Var c_cell = grn_forward(tape, P, "ctx_cell", zeta, std::nullopt, train_mode, drop, rng);
    Var c_hidden = grn_forward(tape, P, "ctx_hidden", zeta, std::nullopt, train_mode, drop, rng);
    Var c_enrich = grn_forward(tape, P, "ctx_enrich", zeta, std::nullopt, train_mode, drop, rng);

    // temporal variable selection (past uses every input, future the known
    // features; known embeddings are shared between the two)
    Var past_leaf = tape.leaf(window.past, "past_input");
    auto past_embs = embed_columns(tape, P, past_leaf, "emb_w.", "emb_b.", cfg.n_past);
    VsnOut pv = vsn_forward(tape, P, "vsn_past", past_embs, c_sel, train_mode, drop, rng);
    out.vsn_past_weights = pv.weights;

    Var fut_leaf = tape.leaf(window.future, "future_input");
    std::vector<Var> fut_embs;
    const int known_offset = cfg.n_past - cfg.n_future;
    for (int f = 0; f < cfg.n_future; ++f) {
        Var col = tape.slice_cols(fut_leaf, f, f + 1);
        Var e = tape.matmul(col, P("emb_w." + std::to_string(known_offset + f)));
        fut_embs.push_back(tape.add_rowvec(e, P("emb_b." + std::to_string(known_offset + f))));
    }
    VsnOut fv = vsn_forward(tape, P, "vsn_fut", fut_embs, c_sel, train_mode, drop, rng);
    out.vsn_future_weights = fv.weights;

    // LSTM encoder over the past, decoder over the horizon
    Var h = c_hidden, c = c_cell;
    Var enc = lstm_run(tape, P, "lstm_enc", pv.combined, h, c);
    Var dec = lstm_run(tape, P, "lstm_dec", fv.combined, h, c);
    Var temporal = tape.concat_rows({enc, dec});
    Var selected = tape.concat_rows({pv.combined, fv.combined});
    Var phi = gate_block(tape, P, "gate_lstm", temporal, selected);

    // static enrichment, then causal interpretable attention
    Var theta = grn_forward(tape, P, "enrich", phi, c_enrich, train_mode, drop, rng);
    MhaOut mha = interpretable_mha(tape, P, theta, theta, theta, causal_mask(cfg.combined()));
    out.head_attention = mha.head_attention;
    Var delta = gate_block(tape, P, "gate_attn", mha.output, theta);

    Var psi = grn_forward(tape, P, "poswise", delta, std::nullopt, train_mode, drop, rng);
    Var final_seq = gate_block(tape, P, "gate_final", psi, phi);

    Var horizon_slice = tape.slice_rows(final_seq, cfg.past_len, cfg.combined());
    out.pred = affine(tape, horizon_slice, P("head.w"), P("head.b"));
    return out;
}

WindowOutput eval_window(const ParamSet& params, const ModelConfig& cfg, const WindowData& window) {
    Tape tape;
    tape.recording = false;
    TapeBinding P = bind_params(tape, params);
    WindowForward f = tft_forward(tape, P, cfg, window, false, nullptr);
    WindowOutput out;
    out.pred = tape.val(f.pred);
    for (Var a : f.head_attention) out.attention.push_back(tape.val(a));
    out.vsn_static_weights = tape.val(f.vsn_static_weights);
    out.vsn_past_weights = tape.val(f.vsn_past_weights);
    out.vsn_future_weights = tape.val(f.vsn_future_weights);
    return out;
}

void verify_attention_invariants(const Mat& attention) {
    if (attention.rows != attention.cols) throw std::runtime_error("attention: not square");
    for (int i = 0; i < attention.rows; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < attention.cols; ++j) {
            double a = attention(i, j);
            if (j > i && a != 0.0)
                throw std::runtime_error("attention: nonzero above diagonal at (" + std::to_string(i) +
                                         "," + std::to_string(j) + ")");
            if (a < 0.0) throw std::runtime_error("attention: negative weight");
            row_sum += a;
        }
        if (std::abs(row_sum - 1.0) > 1e-6)
            throw std::runtime_error("attention: row " + std::to_string(i) + " sums to " +
                                     std::to_string(row_sum));
    }
}

}  // namespace stsens
