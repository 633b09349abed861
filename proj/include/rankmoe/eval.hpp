#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "rankmoe/metrics.hpp"
#include "rankmoe/model.hpp"

namespace rankmoe {

// Scores a record set and assembles the evaluation report. The CTR task pools
// every impression; the CVR task pools clicked impressions only (the space
// the conversion head is trained on). Sessions keep first-appearance order so
// the report is deterministic for a fixed record order.
template <typename T>
EvalReport evaluate(const Model<T>& model, const std::vector<InteractionRecord>& records) {
    if (records.empty()) throw data_error("evaluate: no records");

    std::vector<Predictions> preds;
    preds.reserve(records.size());
    for (const auto& r : records) preds.push_back(model.predict(r));

    EvalReport rep;
    std::vector<double> ctr_scores, cvr_scores;
    std::vector<int> ctr_labels, cvr_labels;
    std::vector<RankedItem> ctr_pool, cvr_pool;
    std::vector<SessionGroup> ctr_groups, cvr_groups;
    std::vector<std::string> session_order;
    std::vector<std::size_t> session_index;  // parallel to records
    std::unordered_map<std::string, std::size_t> session_slot;

    for (const auto& r : records) {
        auto [it, inserted] = session_slot.try_emplace(r.session_id, session_order.size());
        if (inserted) session_order.push_back(r.session_id);
        session_index.push_back(it->second);
    }
    ctr_groups.resize(session_order.size());
    cvr_groups.resize(session_order.size());
    for (std::size_t k = 0; k < session_order.size(); ++k) {
        ctr_groups[k].session_id = session_order[k];
        cvr_groups[k].session_id = session_order[k];
    }

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const auto& p = preds[i];
        rep.counts.impressions += 1;
        rep.counts.clicks += r.label_click;
        rep.counts.applications += r.label_apply;

        ctr_scores.push_back(p.p_ctr);
        ctr_labels.push_back(r.label_click);
        ctr_pool.push_back({r.talent_id, p.p_ctr, r.label_click});
        ctr_groups[session_index[i]].items.push_back({r.talent_id, p.p_ctr, r.label_click});

        if (r.label_click == 1) {
            cvr_scores.push_back(p.p_cvr);
            cvr_labels.push_back(r.label_apply);
            cvr_pool.push_back({r.talent_id, p.p_cvr, r.label_apply});
            cvr_groups[session_index[i]].items.push_back({r.talent_id, p.p_cvr, r.label_apply});
        }
    }
    // Drop CVR session groups that received no clicked impressions at all;
    // they are not part of the conditional pool.
    std::vector<SessionGroup> cvr_nonempty;
    for (auto& g : cvr_groups)
        if (!g.items.empty()) cvr_nonempty.push_back(std::move(g));

    rep.ctr.pool = static_cast<long long>(ctr_scores.size());
    rep.cvr.pool = static_cast<long long>(cvr_scores.size());
    rep.ctr.auc = auc(ctr_scores, ctr_labels);
    rep.ctr.ap = average_precision(ctr_pool);
    rep.ctr.mrr_at_10 = mrr_at_10(ctr_groups, &rep.ctr.excluded_sessions);
    if (!cvr_scores.empty()) {
        rep.cvr.auc = auc(cvr_scores, cvr_labels);
        rep.cvr.ap = average_precision(cvr_pool);
        rep.cvr.mrr_at_10 = mrr_at_10(cvr_nonempty, &rep.cvr.excluded_sessions);
    }
    rep.funnel = funnel_rates(rep.counts);
    return rep;
}

}  // namespace rankmoe
