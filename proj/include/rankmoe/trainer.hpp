#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "rankmoe/adam.hpp"
#include "rankmoe/eval.hpp"
#include "rankmoe/log.hpp"
#include "rankmoe/model.hpp"

namespace rankmoe {

struct LossRow {
    long long step = 0;
    double total = 0.0, ctr = 0.0, cvr = 0.0, relv = 0.0;
};

struct TrainLog {
    std::vector<LossRow> rows;
    long long steps = 0;
    long long epochs = 0;

    // Components are batch means pre-weighted by their lambdas, so each row
    // satisfies total == ctr + cvr + relv up to float addition order.
    std::string csv() const {
        std::string out = "step,loss_total,loss_ctr,loss_cvr,loss_relv\n";
        for (const auto& r : rows) {
            out += std::to_string(r.step);
            out += ',';
            out += detail::fmt_double(r.total);
            out += ',';
            out += detail::fmt_double(r.ctr);
            out += ',';
            out += detail::fmt_double(r.cvr);
            out += ',';
            out += detail::fmt_double(r.relv);
            out += '\n';
        }
        return out;
    }
};

// One shuffled pass over the data per epoch; steps bound training. Batches
// are consecutive slices of the permuted order and never span an epoch
// boundary, so the final slice of an epoch may be short.
template <typename T>
TrainLog train_model(Model<T>& model, const std::vector<InteractionRecord>& data,
                     const std::vector<InteractionRecord>* eval_data = nullptr) {
    if (data.empty()) throw data_error("training dataset is empty");
    const TrainConfig& tc = model.config().train;
    // Ids seen in training data claim embedding rows up front; anything the
    // eval/serve side asks about later that is not in here maps to row 0.
    model.vocabs().add_records(data);

    Rng root = Rng::seeded(static_cast<std::uint64_t>(tc.seed)).derive("train");
    Rng drop_rng = root.derive("dropout");

    AdamConfig<T> ac;
    ac.lr = static_cast<T>(tc.lr);
    Adam<T> opt(ac);
    model.params().zero_grads();

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();  // forces a shuffle before the first batch

    TrainLog log;
    long long last_logged = -1;
    for (long long step = 1; step <= tc.max_steps; ++step) {
        if (cursor >= order.size()) {
            Rng shuffle_rng = root.derive("epoch", static_cast<std::uint64_t>(log.epochs));
            shuffle_rng.shuffle(order);
            ++log.epochs;
            cursor = 0;
        }
        std::size_t batch_n =
            std::min<std::size_t>(static_cast<std::size_t>(tc.batch_size), order.size() - cursor);
        T inv = static_cast<T>(1.0 / static_cast<double>(batch_n));

        LossRow row;
        row.step = step;
        for (std::size_t b = 0; b < batch_n; ++b) {
            const InteractionRecord& rec = data[order[cursor + b]];
            Tape<T> t;
            auto out = model.forward(t, rec, /*training=*/true, &drop_rng);
            LossNodes nodes = model.loss(t, out, rec);
            t.backward(t.scale(nodes.total, inv));
            double w = static_cast<double>(inv);
            row.total += w * static_cast<double>(t.value(nodes.total).at(0, 0));
            if (nodes.ctr >= 0) row.ctr += w * static_cast<double>(t.value(nodes.ctr).at(0, 0));
            if (nodes.cvr >= 0) row.cvr += w * static_cast<double>(t.value(nodes.cvr).at(0, 0));
            if (nodes.relv >= 0) row.relv += w * static_cast<double>(t.value(nodes.relv).at(0, 0));
        }
        cursor += batch_n;

        if (!is_finite(row.total))
            throw data_error("training loss is not finite at step " + std::to_string(step));
        opt.step(model.params());
        log.steps = step;

        if (step == 1 || step % tc.log_every == 0 || step == tc.max_steps) {
            if (step != last_logged) {
                log.rows.push_back(row);
                last_logged = step;
                log_debug("step " + std::to_string(step) + " loss " + detail::fmt_double(row.total));
            }
        }
        if (eval_data && !eval_data->empty() && tc.eval_every > 0 && step % tc.eval_every == 0) {
            std::size_t n = std::min<std::size_t>(
                static_cast<std::size_t>(tc.eval_sample), eval_data->size());
            std::vector<InteractionRecord> sample(eval_data->begin(),
                                                  eval_data->begin() + static_cast<long>(n));
            EvalReport rep = evaluate(model, sample);
            std::string auc = rep.ctr.auc ? detail::fmt_double(*rep.ctr.auc) : "n/a";
            log_info("step " + std::to_string(step) + " eval auc_ctr=" + auc + " on " +
                     std::to_string(n) + " records");
        }
    }
    return log;
}

}  // namespace rankmoe
