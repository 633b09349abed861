#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rankmoe/common.hpp"

namespace rankmoe {

// One scored impression inside a ranking pool. Ties are broken by ascending
// talent_id everywhere: determinism over fairness.
struct RankedItem {
    std::string talent_id;
    double score = 0.0;
    int label = 0;
};

inline void sort_ranked(std::vector<RankedItem>& items) {
    std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.talent_id < b.talent_id;
    });
}

struct SessionGroup {
    std::string session_id;
    std::vector<RankedItem> items;
};

// Rank-average AUC: probability a random positive outranks a random negative,
// tied pairs counted one half. Computed from 1-based average ranks, so any
// strictly increasing score transform leaves the result bit-identical.
inline std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw dim_error("auc: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
    long long p = 0, n = 0;
    for (int l : labels) (l != 0 ? ++p : ++n);
    if (p == 0 || n == 0) return std::nullopt;

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels[idx[k]] != 0) rank_sum += avg_rank;
        i = j + 1;
    }
    return (rank_sum - 0.5 * static_cast<double>(p) * static_cast<double>(p + 1)) /
           (static_cast<double>(p) * static_cast<double>(n));
}

// Global average precision over the score-sorted pool.
inline std::optional<double> average_precision(std::vector<RankedItem> items) {
    sort_ranked(items);
    long long positives = 0;
    for (const auto& it : items) positives += it.label != 0;
    if (positives == 0) return std::nullopt;
    double ap = 0.0;
    long long seen = 0;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (items[k].label == 0) continue;
        ++seen;
        ap += static_cast<double>(seen) / static_cast<double>(k + 1);
    }
    return ap / static_cast<double>(positives);
}

// Mean reciprocal rank at cutoff 10, averaged over sessions that contain at
// least one positive; a session whose first positive sits below rank 10
// contributes 0. Positive-free sessions are excluded and counted.
inline std::optional<double> mrr_at_10(std::vector<SessionGroup> groups,
                                       long long* excluded_out = nullptr) {
    long long excluded = 0, used = 0;
    double sum = 0.0;
    for (auto& g : groups) {
        sort_ranked(g.items);
        std::size_t first = g.items.size();
        for (std::size_t k = 0; k < g.items.size(); ++k) {
            if (g.items[k].label != 0) {
                first = k;
                break;
            }
        }
        if (first == g.items.size()) {
            ++excluded;
            continue;
        }
        ++used;
        if (first < 10) sum += 1.0 / static_cast<double>(first + 1);
    }
    if (excluded_out) *excluded_out = excluded;
    if (used == 0) return std::nullopt;
    return sum / static_cast<double>(used);
}

struct FunnelCounts {
    long long impressions = 0;
    long long clicks = 0;
    long long applications = 0;
};

struct FunnelRates {
    double ctr_rate = 0.0;
    std::optional<double> cvr_rate;
    double ctcvr_rate = 0.0;
};

inline FunnelRates funnel_rates(const FunnelCounts& c) {
    if (c.impressions <= 0) throw data_error("funnel_rates: zero impressions");
    if (c.applications > c.clicks || c.clicks > c.impressions)
        throw data_error("funnel_rates: counts violate applications <= clicks <= impressions");
    FunnelRates r;
    r.ctr_rate = static_cast<double>(c.clicks) / static_cast<double>(c.impressions);
    if (c.clicks > 0)
        r.cvr_rate = static_cast<double>(c.applications) / static_cast<double>(c.clicks);
    r.ctcvr_rate = static_cast<double>(c.applications) / static_cast<double>(c.impressions);
    return r;
}

struct TaskMetrics {
    std::optional<double> auc;
    std::optional<double> mrr_at_10;
    std::optional<double> ap;
    long long pool = 0;               // impressions scored for this task
    long long excluded_sessions = 0;  // sessions without a positive
};

struct EvalReport {
    TaskMetrics ctr;
    TaskMetrics cvr;  // clicked impressions only
    FunnelCounts counts;
    FunnelRates funnel;
};

namespace detail {
// Shortest decimal representation that round-trips; keeps logs and CSVs
// byte-stable across runs.
inline std::string fmt_metric(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_metric(*v) : std::string();
}
}  // namespace detail

// Flat two-column CSV; absent metrics serialize as empty values.
inline std::string report_csv(const EvalReport& r) {
    using detail::fmt_metric;
    using detail::fmt_opt;
    std::ostringstream o;
    o << "metric,value\n";
    o << "impressions," << r.counts.impressions << "\n";
    o << "clicks," << r.counts.clicks << "\n";
    o << "applications," << r.counts.applications << "\n";
    o << "ctr_rate," << fmt_metric(r.funnel.ctr_rate) << "\n";
    o << "cvr_rate," << fmt_opt(r.funnel.cvr_rate) << "\n";
    o << "ctcvr_rate," << fmt_metric(r.funnel.ctcvr_rate) << "\n";
    o << "auc_ctr," << fmt_opt(r.ctr.auc) << "\n";
    o << "mrr10_ctr," << fmt_opt(r.ctr.mrr_at_10) << "\n";
    o << "ap_ctr," << fmt_opt(r.ctr.ap) << "\n";
    o << "excluded_sessions_ctr," << r.ctr.excluded_sessions << "\n";
    o << "auc_cvr," << fmt_opt(r.cvr.auc) << "\n";
    o << "mrr10_cvr," << fmt_opt(r.cvr.mrr_at_10) << "\n";
    o << "ap_cvr," << fmt_opt(r.cvr.ap) << "\n";
    o << "excluded_sessions_cvr," << r.cvr.excluded_sessions << "\n";
    return o.str();
}

inline std::string report_table(const EvalReport& r) {
    using detail::fmt_metric;
    auto cell = [](const std::optional<double>& v) {
        return v ? detail::fmt_metric(*v) : std::string("-");
    };
    std::ostringstream o;
    o << "impressions " << r.counts.impressions << ", clicks " << r.counts.clicks
      << ", applications " << r.counts.applications << "\n";
    o << "funnel: ctr " << fmt_metric(r.funnel.ctr_rate) << ", cvr "
      << cell(r.funnel.cvr_rate) << ", ctcvr " << fmt_metric(r.funnel.ctcvr_rate) << "\n";
    o << "task   auc          mrr@10       ap           pool     excluded\n";
    auto row = [&](const char* name, const TaskMetrics& m) {
        o << name;
        for (const auto& v : {m.auc, m.mrr_at_10, m.ap}) {
            std::string s = cell(v);
            o << "  " << s << std::string(s.size() < 11 ? 11 - s.size() : 0, ' ');
        }
        o << "  " << m.pool << "  " << m.excluded_sessions << "\n";
    };
    row("ctr ", r.ctr);
    row("cvr ", r.cvr);
    return o.str();
}

}  // namespace rankmoe
