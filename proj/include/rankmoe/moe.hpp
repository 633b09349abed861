#pragma once

#include <string>
#include <vector>

#include "rankmoe/layers.hpp"

namespace rankmoe {

// Gate head: two hidden layers (ReLU, no dropout) plus a linear projection to
// one weight per expert, normalized by a row softmax.
template <typename T>
struct GateNet {
    Mlp<T> body;
    Linear<T> out;

    GateNet() = default;
    GateNet(int in, const std::vector<int>& hidden, int n_experts)
        : body(in, hidden, /*relu_last=*/true, /*dropout_last=*/false),
          out(hidden.back(), n_experts) {}

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        body.register_params(ps, prefix + ".body");
        out.register_params(ps, prefix + ".out");
    }

    // Returns a 1 x n_experts distribution (nonnegative, sums to 1).
    int forward(Tape<T>& t, int input) const {
        return t.softmax_rows(out.forward(t, body.forward(t, input, false, T(0), nullptr)));
    }
};

// Multi-gate mixture of experts. Every gate mixes the same expert outputs:
//   x_hat_k = sum_i g_k[i] * f_i(x)
// Expert forwards are computed once per record and shared across gates.
// Gates normally condition on the role embedding alone; gates_on_input
// switches them to the full input x (the standard-MMoE ablation).
template <typename T>
struct MoeBlock {
    std::vector<Mlp<T>> experts;
    std::vector<GateNet<T>> gates;
    std::vector<std::string> gate_names;
    bool gates_on_input = false;

    MoeBlock() = default;
    MoeBlock(int x_dim, const std::vector<int>& expert_sizes, int n_experts, int gate_in,
             const std::vector<int>& gate_hidden, std::vector<std::string> names)
        : gate_names(std::move(names)) {
        if (n_experts < 1) throw usage_error("n_experts must be >= 1");
        for (int i = 0; i < n_experts; ++i)
            experts.emplace_back(x_dim, expert_sizes, /*relu_last=*/true, /*dropout_last=*/false);
        for (std::size_t k = 0; k < gate_names.size(); ++k)
            gates.emplace_back(gate_in, gate_hidden, n_experts);
    }

    int n_experts() const { return static_cast<int>(experts.size()); }
    int out_dim() const { return experts.front().out_dim(); }

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        for (std::size_t i = 0; i < experts.size(); ++i)
            experts[i].register_params(ps, prefix + ".expert." + std::to_string(i + 1));
        for (std::size_t k = 0; k < gates.size(); ++k)
            gates[k].register_params(ps, prefix + ".gate." + gate_names[k]);
    }

    // All expert outputs stacked into one n_experts x out_dim node.
    int experts_stacked(Tape<T>& t, int x, bool training, T dropout_rate, Rng* drop_rng) const {
        std::vector<int> outs;
        outs.reserve(experts.size());
        for (const auto& e : experts) outs.push_back(e.forward(t, x, training, dropout_rate, drop_rng));
        return t.concat_rows(outs);
    }

    // Task-specific mixture for gate k: (1 x n) gate row times the stack.
    int combine(Tape<T>& t, int stacked, std::size_t k, int gate_input) const {
        return t.matmul(gates[k].forward(t, gate_input), stacked);
    }
};

}  // namespace rankmoe
