#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "rankmoe/rng.hpp"
#include "rankmoe/tensor.hpp"

namespace rankmoe {

// Reverse-mode autodiff tape. Ops append nodes in execution order, which is
// already a topological order; backward() walks the same list in exact
// reverse, so every node's gradient is complete before its inputs see it.
// Gradients accumulate with += across multiple uses of a node. Parameter
// leaves alias external Tensors and accumulate into their grad buffers, which
// survive across tapes until the optimizer consumes them.
template <typename T>
class Tape {
public:
    // A tape built with track_grads=false records values only; backward() on
    // it is an error. Used for inference so shared parameters stay read-only.
    explicit Tape(bool track_grads = true) : track_grads_(track_grads) {}

    int size() const { return static_cast<int>(nodes_.size()); }

    void clear() { nodes_.clear(); }

    const Tensor<T>& value(int id) const {
        const Node& n = node(id);
        return n.ext ? *n.ext : n.val;
    }

    bool needs_grad(int id) const { return node(id).needs_grad; }

    // Gradient of a non-parameter node; zeros if nothing flowed into it.
    Tensor<T> grad_tensor(int id) const {
        const Node& n = node(id);
        const Tensor<T>& v = value(id);
        Tensor<T> g(v.rows, v.cols);
        const std::vector<T>& buf = n.ext ? n.ext->grad : n.grad;
        if (!buf.empty()) g.data = buf;
        return g;
    }

    // --- leaves ---

    int constant(Tensor<T> v) {
        Node n;
        n.val = std::move(v);
        n.needs_grad = false;
        return push(std::move(n));
    }

    // Leaf backed by an external tensor; backward accumulates into p.grad.
    int param(const Tensor<T>& p) {
        Node n;
        n.ext = const_cast<Tensor<T>*>(&p);
        n.needs_grad = track_grads_ && p.requires_grad;
        return push(std::move(n));
    }

    // --- ops ---

    int matmul(int a, int b) {
        const Tensor<T>& A = value(a);
        const Tensor<T>& B = value(b);
        if (A.cols != B.rows)
            throw dim_error("matmul: inner dims differ, " + A.shape() + " x " + B.shape());
        Tensor<T> out(A.rows, B.cols);
        matmul_into(A, B, out);
        return push_op(std::move(out), {a, b}, [a, b](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& A = t.value(a);
            const Tensor<T>& B = t.value(b);
            if (t.needs_grad(a)) {
                // dA = g * B^T
                std::vector<T>& ga = t.grad_ref(a);
                for (int i = 0; i < A.rows; ++i)
                    for (int j = 0; j < B.cols; ++j) {
                        T gij = g[static_cast<std::size_t>(i) * B.cols + j];
                        if (gij == T(0)) continue;
                        const T* brow = B.data.data();
                        for (int k = 0; k < A.cols; ++k)
                            ga[static_cast<std::size_t>(i) * A.cols + k] += gij * brow[static_cast<std::size_t>(k) * B.cols + j];
                    }
            }
            if (t.needs_grad(b)) {
                // dB = A^T * g
                std::vector<T>& gb = t.grad_ref(b);
                for (int i = 0; i < A.rows; ++i) {
                    const T* arow = A.row_ptr(i);
                    const T* grow = g.data() + static_cast<std::size_t>(i) * B.cols;
                    for (int k = 0; k < A.cols; ++k) {
                        T aik = arow[k];
                        if (aik == T(0)) continue;
                        T* gbrow = gb.data() + static_cast<std::size_t>(k) * B.cols;
                        for (int j = 0; j < B.cols; ++j) gbrow[j] += aik * grow[j];
                    }
                }
            }
        });
    }

    int add(int a, int b) {
        const Tensor<T>& A = value(a);
        const Tensor<T>& B = value(b);
        if (!A.same_shape(B))
            throw dim_error("add: shape mismatch, " + A.shape() + " vs " + B.shape());
        Tensor<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = A.data[i] + B.data[i];
        return push_op(std::move(out), {a, b}, [a, b](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            if (t.needs_grad(a)) {
                std::vector<T>& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (t.needs_grad(b)) {
                std::vector<T>& gb = t.grad_ref(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }

    // Elementwise (Hadamard) product.
    int mul(int a, int b) {
        const Tensor<T>& A = value(a);
        const Tensor<T>& B = value(b);
        if (!A.same_shape(B))
            throw dim_error("mul: shape mismatch, " + A.shape() + " vs " + B.shape());
        Tensor<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = A.data[i] * B.data[i];
        return push_op(std::move(out), {a, b}, [a, b](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& A = t.value(a);
            const Tensor<T>& B = t.value(b);
            if (t.needs_grad(a)) {
                std::vector<T>& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B.data[i];
            }
            if (t.needs_grad(b)) {
                std::vector<T>& gb = t.grad_ref(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A.data[i];
            }
        });
    }

    int scale(int a, T factor) {
        const Tensor<T>& A = value(a);
        Tensor<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = A.data[i] * factor;
        return push_op(std::move(out), {a}, [a, factor](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            if (t.needs_grad(a)) {
                std::vector<T>& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
            }
        });
    }

    int relu(int a) {
        const Tensor<T>& A = value(a);
        Tensor<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = A.data[i] > T(0) ? A.data[i] : T(0);
        return push_op(std::move(out), {a}, [a](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& A = t.value(a);
            if (t.needs_grad(a)) {
                std::vector<T>& ga = t.grad_ref(a);
                // subgradient at 0 is 0
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (A.data[i] > T(0)) ga[i] += g[i];
            }
        });
    }

    int sigmoid(int a) {
        const Tensor<T>& A = value(a);
        Tensor<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            double x = static_cast<double>(A.data[i]);
            double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            out.data[i] = static_cast<T>(s);
        }
        return push_op(std::move(out), {a}, [a](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& S = t.value(self);
            if (t.needs_grad(a)) {
                std::vector<T>& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * S.data[i] * (T(1) - S.data[i]);
            }
        });
    }

    // Row-wise softmax with max subtraction for stability.
    int softmax_rows(int a) {
        const Tensor<T>& A = value(a);
        Tensor<T> out(A.rows, A.cols);
        for (int r = 0; r < A.rows; ++r) {
            const T* in = A.row_ptr(r);
            T* o = out.row_ptr(r);
            T mx = in[0];
            for (int c = 1; c < A.cols; ++c) mx = std::max(mx, in[c]);
            double denom = 0;
            for (int c = 0; c < A.cols; ++c) {
                double e = std::exp(static_cast<double>(in[c] - mx));
                o[c] = static_cast<T>(e);
                denom += e;
            }
            for (int c = 0; c < A.cols; ++c) o[c] = static_cast<T>(static_cast<double>(o[c]) / denom);
        }
        return push_op(std::move(out), {a}, [a](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& S = t.value(self);
            if (!t.needs_grad(a)) return;
            std::vector<T>& ga = t.grad_ref(a);
            for (int r = 0; r < S.rows; ++r) {
                const T* s = S.row_ptr(r);
                const T* gr = g.data() + static_cast<std::size_t>(r) * S.cols;
                T dot = T(0);
                for (int c = 0; c < S.cols; ++c) dot += gr[c] * s[c];
                T* gar = ga.data() + static_cast<std::size_t>(r) * S.cols;
                for (int c = 0; c < S.cols; ++c) gar[c] += s[c] * (gr[c] - dot);
            }
        });
    }

    int transpose(int a) {
        const Tensor<T>& A = value(a);
        Tensor<T> out(A.cols, A.rows);
        for (int r = 0; r < A.rows; ++r)
            for (int c = 0; c < A.cols; ++c) out.at(c, r) = A.at(r, c);
        return push_op(std::move(out), {a}, [a](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& O = t.value(self);
            if (!t.needs_grad(a)) return;
            std::vector<T>& ga = t.grad_ref(a);
            // ga is (cols x rows) of O
            for (int r = 0; r < O.rows; ++r)
                for (int c = 0; c < O.cols; ++c)
                    ga[static_cast<std::size_t>(c) * O.rows + r] += g[static_cast<std::size_t>(r) * O.cols + c];
        });
    }

    int concat_cols(const std::vector<int>& parts) {
        if (parts.empty()) throw dim_error("concat_cols: no inputs");
        int rows = value(parts[0]).rows;
        int cols = 0;
        for (int p : parts) {
            if (value(p).rows != rows)
                throw dim_error("concat_cols: row mismatch, " + value(parts[0]).shape() + " vs " + value(p).shape());
            cols += value(p).cols;
        }
        Tensor<T> out(rows, cols);
        int off = 0;
        for (int p : parts) {
            const Tensor<T>& P = value(p);
            for (int r = 0; r < rows; ++r)
                std::copy(P.row_ptr(r), P.row_ptr(r) + P.cols, out.row_ptr(r) + off);
            off += P.cols;
        }
        return push_op(std::move(out), parts, [parts](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& O = t.value(self);
            int off = 0;
            for (int p : parts) {
                const Tensor<T>& P = t.value(p);
                if (t.needs_grad(p)) {
                    std::vector<T>& gp = t.grad_ref(p);
                    for (int r = 0; r < O.rows; ++r) {
                        const T* gr = g.data() + static_cast<std::size_t>(r) * O.cols + off;
                        T* dst = gp.data() + static_cast<std::size_t>(r) * P.cols;
                        for (int c = 0; c < P.cols; ++c) dst[c] += gr[c];
                    }
                }
                off += P.cols;
            }
        });
    }

    int concat_rows(const std::vector<int>& parts) {
        if (parts.empty()) throw dim_error("concat_rows: no inputs");
        int cols = value(parts[0]).cols;
        int rows = 0;
        for (int p : parts) {
            if (value(p).cols != cols)
                throw dim_error("concat_rows: col mismatch, " + value(parts[0]).shape() + " vs " + value(p).shape());
            rows += value(p).rows;
        }
        Tensor<T> out(rows, cols);
        int off = 0;
        for (int p : parts) {
            const Tensor<T>& P = value(p);
            std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::size_t>(off) * cols);
            off += P.rows;
        }
        return push_op(std::move(out), parts, [parts](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            int off = 0;
            int cols = t.value(self).cols;
            for (int p : parts) {
                const Tensor<T>& P = t.value(p);
                if (t.needs_grad(p)) {
                    std::vector<T>& gp = t.grad_ref(p);
                    const T* src = g.data() + static_cast<std::size_t>(off) * cols;
                    for (std::size_t i = 0; i < P.numel(); ++i) gp[i] += src[i];
                }
                off += P.rows;
            }
        });
    }

    // Row gather from an external table; backward scatter-adds into the rows
    // that were used, accumulating when an index repeats.
    int gather_rows(const Tensor<T>& table, std::vector<int> indices) {
        for (int i : indices)
            if (i < 0 || i >= table.rows)
                throw dim_error("gather_rows: index " + std::to_string(i) + " out of range for " + table.shape());
        int tid = param(table);
        Tensor<T> out(static_cast<int>(indices.size()), table.cols);
        for (std::size_t r = 0; r < indices.size(); ++r)
            std::copy(table.row_ptr(indices[r]), table.row_ptr(indices[r]) + table.cols, out.row_ptr(static_cast<int>(r)));
        return push_op(std::move(out), {tid}, [tid, idx = std::move(indices)](Tape& t, int self) {
            if (!t.needs_grad(tid)) return;
            const std::vector<T>& g = t.grad_buf(self);
            const Tensor<T>& Tb = t.value(tid);
            std::vector<T>& gt = t.grad_ref(tid);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const T* src = g.data() + r * Tb.cols;
                T* dst = gt.data() + static_cast<std::size_t>(idx[r]) * Tb.cols;
                for (int c = 0; c < Tb.cols; ++c) dst[c] += src[c];
            }
        });
    }

    // Inverted dropout: keep with probability 1-rate and scale by 1/(1-rate)
    // so the expectation is preserved; identity in eval mode or at rate 0.
    int dropout(int a, T rate, bool training, Rng* rng) {
        if (!(rate >= T(0) && rate < T(1)))
            throw dim_error("dropout: rate must be in [0,1), got " + std::to_string(static_cast<double>(rate)));
        const Tensor<T>& A = value(a);
        if (!training || rate == T(0)) {
            Tensor<T> out = A;
            return push_op(std::move(out), {a}, [a](Tape& t, int self) {
                const std::vector<T>& g = t.grad_buf(self);
                if (!t.needs_grad(a)) return;
                std::vector<T>& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            });
        }
        if (!rng) throw dim_error("dropout: training mode requires an rng");
        T keep_scale = T(1) / (T(1) - rate);
        std::vector<T> mask(A.numel());
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = rng->bernoulli(static_cast<double>(rate)) ? T(0) : keep_scale;
        Tensor<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = A.data[i] * mask[i];
        return push_op(std::move(out), {a}, [a, m = std::move(mask)](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            if (!t.needs_grad(a)) return;
            std::vector<T>& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
        });
    }

    // Sum of all elements -> 1x1.
    int sum(int a) {
        const Tensor<T>& A = value(a);
        T s = T(0);
        for (T v : A.data) s += v;
        Tensor<T> out(1, 1);
        out.data[0] = s;
        return push_op(std::move(out), {a}, [a](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            if (!t.needs_grad(a)) return;
            std::vector<T>& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        });
    }

    // -ln(p[label]) on a 1xk probability row, clamped at p >= kProbFloor.
    // Inside the clamp the gradient is exactly zero.
    static constexpr double kProbFloor = 1e-12;

    int cross_entropy(int dist, int label) {
        const Tensor<T>& D = value(dist);
        if (D.rows != 1) throw dim_error("cross_entropy: expected a 1xk row, got " + D.shape());
        if (label < 0 || label >= D.cols)
            throw dim_error("cross_entropy: label " + std::to_string(label) + " out of range for " + D.shape());
        double p = static_cast<double>(D.data[label]);
        double pc = std::max(p, kProbFloor);
        Tensor<T> out(1, 1);
        out.data[0] = static_cast<T>(-std::log(pc));
        return push_op(std::move(out), {dist}, [dist, label](Tape& t, int self) {
            const std::vector<T>& g = t.grad_buf(self);
            if (!t.needs_grad(dist)) return;
            const Tensor<T>& D = t.value(dist);
            double p = static_cast<double>(D.data[label]);
            if (p < kProbFloor) return;  // clamped region
            t.grad_ref(dist)[label] += g[0] * static_cast<T>(-1.0 / p);
        });
    }

    // Value copy that blocks gradient flow.
    int detach(int a) {
        return constant(value(a));
    }

    // Seeds d(loss)/d(loss) = 1 and walks nodes in exact reverse order.
    void backward(int loss) {
        if (!track_grads_) throw dim_error("backward: tape was built with track_grads=false");
        const Tensor<T>& L = value(loss);
        if (L.rows != 1 || L.cols != 1)
            throw dim_error("backward: loss must be 1x1, got " + L.shape());
        grad_ref(loss)[0] += T(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.back || !n.needs_grad) continue;
            const std::vector<T>& g = n.ext ? n.ext->grad : n.grad;
            if (g.empty()) continue;  // unreachable from the loss
            n.back(*this, i);
        }
    }

    // Gradient buffer of a node, allocated on first touch.
    std::vector<T>& grad_ref(int id) {
        Node& n = node(id);
        if (n.ext) {
            n.ext->ensure_grad();
            return n.ext->grad;
        }
        if (n.grad.size() != value(id).numel()) n.grad.assign(value(id).numel(), T(0));
        return n.grad;
    }

private:
    struct Node {
        Tensor<T> val;
        Tensor<T>* ext = nullptr;
        std::vector<T> grad;
        bool needs_grad = false;
        std::function<void(Tape&, int)> back;
    };

    Node& node(int id) {
        if (id < 0 || id >= size()) throw dim_error("tape: bad node id " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(id)];
    }
    const Node& node(int id) const {
        if (id < 0 || id >= size()) throw dim_error("tape: bad node id " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(id)];
    }

    const std::vector<T>& grad_buf(int id) {
        Node& n = node(id);
        return n.ext ? n.ext->grad : n.grad;
    }

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return size() - 1;
    }

    template <typename Fn>
    int push_op(Tensor<T> out, const std::vector<int>& parents, Fn&& back) {
        Node n;
        n.val = std::move(out);
        for (int p : parents)
            if (node(p).needs_grad) {
                n.needs_grad = true;
                break;
            }
        if (n.needs_grad) n.back = std::forward<Fn>(back);
        return push(std::move(n));
    }

    static void matmul_into(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& out) {
        for (int i = 0; i < A.rows; ++i) {
            const T* arow = A.row_ptr(i);
            T* orow = out.row_ptr(i);
            for (int k = 0; k < A.cols; ++k) {
                T aik = arow[k];
                if (aik == T(0)) continue;
                const T* brow = B.row_ptr(k);
                for (int j = 0; j < B.cols; ++j) orow[j] += aik * brow[j];
            }
        }
    }

    std::deque<Node> nodes_;  // deque: value() references stay valid as ops append
    bool track_grads_;
};

}  // namespace rankmoe
