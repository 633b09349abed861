#pragma once

#include <string>
#include <vector>

#include "rankmoe/layers.hpp"
#include "rankmoe/record.hpp"

namespace rankmoe {

// Deep tower plus a linear projection back to the residual width, so the
// tower output can be added onto its own input stream.
template <typename T>
struct TaskTower {
    Mlp<T> net;
    Linear<T> proj;

    TaskTower() = default;
    // dropout_last=true: the projection is a learned layer fed by the last
    // activation, so that activation is dropout-eligible too.
    TaskTower(int in, const std::vector<int>& sizes, int resid_width)
        : net(in, sizes, /*relu_last=*/true, /*dropout_last=*/true),
          proj(sizes.back(), resid_width) {}

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        net.register_params(ps, prefix + ".net");
        proj.register_params(ps, prefix + ".proj");
    }

    int forward(Tape<T>& t, int x, bool training, T dropout_rate, Rng* drop_rng) const {
        return proj.forward(t, net.forward(t, x, training, dropout_rate, drop_rng));
    }
};

// Binary output head: linear layer to 2 logits, row softmax.
// Column 1 is the positive class.
template <typename T>
struct Head {
    Linear<T> l;

    Head() = default;
    explicit Head(int in) : l(in, 2) {}

    void register_params(ParamSet<T>& ps, const std::string& prefix) {
        l.register_params(ps, prefix);
    }

    int forward(Tape<T>& t, int o) const { return t.softmax_rows(l.forward(t, o)); }
};

struct LossWeights {
    double ctr = 1.0;
    double cvr = 1.0;
    double relv = 1.0;
};

// Node ids of the per-record loss terms; -1 marks a term that was not built.
// Absent terms contribute exactly zero to the total and to every gradient.
struct LossNodes {
    int total = -1;
    int ctr = -1;
    int cvr = -1;
    int relv = -1;
};

// Weighted joint loss for one record. The conversion term exists only for
// clicked impressions: an unclicked record never builds a CVR node, so no
// gradient can reach the CVR branch. y_relv < 0 means the model variant has
// no relevance head. Each stored component is already scaled by its weight,
// so total == ctr + cvr + relv holds over the present terms.
template <typename T>
LossNodes joint_loss(Tape<T>& t, int y_ctr, int y_cvr, int y_relv,
                     const InteractionRecord& rec, const LossWeights& w) {
    LossNodes out;
    std::vector<int> terms;
    if (w.ctr != 0.0) {
        out.ctr = t.scale(t.cross_entropy(y_ctr, rec.label_click), T(w.ctr));
        terms.push_back(out.ctr);
    }
    if (rec.label_click == 1 && w.cvr != 0.0) {
        out.cvr = t.scale(t.cross_entropy(y_cvr, rec.label_apply), T(w.cvr));
        terms.push_back(out.cvr);
    }
    if (y_relv >= 0 && w.relv != 0.0) {
        out.relv = t.scale(t.cross_entropy(y_relv, rec.label_relevant), T(w.relv));
        terms.push_back(out.relv);
    }
    if (terms.empty()) {
        out.total = t.constant(Tensor<T>::zeros(1, 1));
    } else {
        out.total = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) out.total = t.add(out.total, terms[i]);
    }
    return out;
}

// Ranking score for a scored impression: probability of click times
// probability of conversion given click.
template <typename T>
T final_score(T p_ctr, T p_cvr) {
    return p_ctr * p_cvr;
}

}  // namespace rankmoe
