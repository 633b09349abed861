#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rankmoe/params.hpp"
#include "rankmoe/tape.hpp"

namespace rankmoe {

template <typename T>
struct Linear {
    Tensor<T> w;  // in x out
    Tensor<T> b;  // 1 x out
    bool has_bias = true;

    Linear() = default;
    Linear(int in, int out, bool bias = true) : w(in, out), b(1, out), has_bias(bias) {}

    int in_dim() const { return w.rows; }
    int out_dim() const { return w.cols; }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w", w, InitSpec::fan(w.rows));
        if (has_bias) ps.add(prefix + ".b", b, InitSpec::zero());
    }

    int forward(Tape<T>& t, int x) const {
        int y = t.matmul(x, t.param(w));
        return has_bias ? t.add(y, t.param(b)) : y;
    }
};

// Stack of Linear layers with ReLU after every layer. Dropout (inverted,
// training only) follows each activation that feeds another learned layer;
// dropout_last extends it to the final activation for towers that are
// consumed by a projection.
template <typename T>
struct Mlp {
    std::vector<Linear<T>> layers;
    bool relu_last = true;
    bool dropout_last = false;

    Mlp() = default;
    Mlp(int in, const std::vector<int>& sizes, bool relu_last_ = true, bool dropout_last_ = false)
        : relu_last(relu_last_), dropout_last(dropout_last_) {
        int prev = in;
        for (int s : sizes) {
            layers.emplace_back(prev, s);
            prev = s;
        }
    }

    int in_dim() const { return layers.front().in_dim(); }
    int out_dim() const { return layers.back().out_dim(); }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].register_params(ps, prefix + ".l" + std::to_string(i + 1));
    }

    int forward(Tape<T>& t, int x, bool training, T dropout_rate, Rng* drop_rng) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            bool last = (i + 1 == layers.size());
            x = layers[i].forward(t, x);
            if (!last || relu_last) x = t.relu(x);
            if (dropout_rate > T(0) && (!last || dropout_last))
                x = t.dropout(x, dropout_rate, training, drop_rng);
        }
        return x;
    }
};

template <typename T>
struct EmbeddingTable {
    Tensor<T> weights;  // rows x dim; row 0 is the unknown slot

    EmbeddingTable() = default;
    EmbeddingTable(int rows, int dim) : weights(rows, dim) {}

    int dim() const { return weights.cols; }
    int rows() const { return weights.rows; }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w", weights, InitSpec::fan(weights.cols));
    }

    int lookup(Tape<T>& t, int index) const { return t.gather_rows(weights, {index}); }

    int lookup_many(Tape<T>& t, const std::vector<int>& indices) const {
        return t.gather_rows(weights, indices);
    }
};

// Gated cross layer over the concatenated JD/resume embedding:
//   c = c0 ⊙ (c0 W_c + b) ⊙ sigmoid(c0 W_g) + c0
// The elementwise products build bounded multiplicative feature crosses; the
// residual keeps the original signal intact.
template <typename T>
struct GatedCross {
    Tensor<T> w_cross;  // width x width
    Tensor<T> w_gate;   // width x width
    Tensor<T> b;        // 1 x width

    GatedCross() = default;
    explicit GatedCross(int width) : w_cross(width, width), w_gate(width, width), b(1, width) {}

    int width() const { return b.cols; }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w_cross", w_cross, InitSpec::fan(w_cross.rows));
        ps.add(prefix + ".w_gate", w_gate, InitSpec::fan(w_gate.rows));
        ps.add(prefix + ".b", b, InitSpec::zero());
    }

    int forward(Tape<T>& t, int c0) const {
        if (t.value(c0).cols != width() || t.value(c0).rows != 1)
            throw dim_error("gated cross: expected 1x" + std::to_string(width()) + " input, got " +
                            t.value(c0).shape());
        int cross = t.add(t.matmul(c0, t.param(w_cross)), t.param(b));
        int gate = t.sigmoid(t.matmul(c0, t.param(w_gate)));
        return t.add(t.mul(t.mul(c0, cross), gate), c0);
    }
};

// Single-head scaled dot-product attention of the current talent over the
// recruiter's history embeddings. Empty history yields a zero vector.
template <typename T>
struct HistoryAttention {
    static constexpr int kHeads = 1;

    Tensor<T> w_q, w_k, w_v;  // dim x dim each

    HistoryAttention() = default;
    explicit HistoryAttention(int dim) : w_q(dim, dim), w_k(dim, dim), w_v(dim, dim) {}

    int dim() const { return w_q.rows; }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w_q", w_q, InitSpec::fan(w_q.rows));
        ps.add(prefix + ".w_k", w_k, InitSpec::fan(w_k.rows));
        ps.add(prefix + ".w_v", w_v, InitSpec::fan(w_v.rows));
    }

    // current: 1 x dim; history: h x dim, or -1 for an empty history.
    int forward(Tape<T>& t, int current, int history) const {
        if (history < 0) return t.constant(Tensor<T>::zeros(1, dim()));
        int q = t.matmul(current, t.param(w_q));
        int k = t.matmul(history, t.param(w_k));
        int v = t.matmul(history, t.param(w_v));
        int scores = t.scale(t.matmul(q, t.transpose(k)),
                             static_cast<T>(1.0 / std::sqrt(static_cast<double>(dim()))));
        return t.matmul(t.softmax_rows(scores), v);
    }
};

}  // namespace rankmoe
