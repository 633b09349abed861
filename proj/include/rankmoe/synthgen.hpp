#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "rankmoe/config.hpp"
#include "rankmoe/record.hpp"
#include "rankmoe/rng.hpp"

namespace rankmoe {

// Monotone S-curve built from rational arithmetic only. exp() rounding is
// allowed to differ between libm implementations; this keeps generated bytes
// identical across platforms.
inline double squash(double z) { return 0.5 * (1.0 + z / (1.0 + std::abs(z))); }

// Ground-truth world behind a generated dataset: unit skill vectors per job
// and talent, a fixed role per recruiter, and the realized label-noise
// counters filled in during generation.
struct LatentWorld {
    GenConfig cfg;
    std::vector<std::vector<double>> job_lat;
    std::vector<std::vector<double>> talent_lat;
    std::vector<Role> recruiter_role;  // index = recruiter number
    std::vector<int> job_empty_jd;     // 1: job posts no description text

    struct RoleStats {
        long long records = 0;
        long long click_flips = 0;
        long long clicks = 0;
        long long apply_flips = 0;  // flip draws happen on clicked records only
        long long applies = 0;
    };
    RoleStats stats[3];  // indexed by role_slot
    long long train_records = 0;
    long long test_records = 0;

    static int role_slot(Role r) { return static_cast<int>(r) - 1; }

    static LatentWorld build(const GenConfig& g) {
        LatentWorld w;
        w.cfg = g;
        Rng root = Rng::seeded(g.gen_seed);

        auto unit_vec = [&](Rng r, int k) {
            std::vector<double> v(static_cast<std::size_t>(k));
            double sq = 0.0;
            for (auto& x : v) {
                x = r.uniform(-1.0, 1.0);
                sq += x * x;
            }
            if (sq == 0.0) {
                v[0] = 1.0;
                return v;
            }
            double inv = 1.0 / std::sqrt(sq);
            for (auto& x : v) x *= inv;
            return v;
        };
        Rng jl = root.derive("latents.job");
        Rng tl = root.derive("latents.talent");
        for (int j = 0; j < g.n_jobs; ++j)
            w.job_lat.push_back(unit_vec(jl.derive(static_cast<std::uint64_t>(j)), g.latent_dim));
        for (int t = 0; t < g.n_talents; ++t)
            w.talent_lat.push_back(unit_vec(tl.derive(static_cast<std::uint64_t>(t)), g.latent_dim));

        // Role counts by largest remainder, so marginals track the mix as
        // closely as integer counts allow.
        int counts[3] = {0, 0, 0};
        double frac[3];
        int assigned = 0;
        for (int s = 0; s < 3; ++s) {
            double exact = g.role_mix[static_cast<std::size_t>(s)] * g.n_recruiters;
            counts[s] = static_cast<int>(exact);
            frac[s] = exact - counts[s];
            assigned += counts[s];
        }
        while (assigned < g.n_recruiters) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (frac[s] > frac[best]) best = s;
            ++counts[best];
            frac[best] = -1.0;
            ++assigned;
        }
        for (int s = 0; s < 3; ++s)
            for (int i = 0; i < counts[s]; ++i)
                w.recruiter_role.push_back(static_cast<Role>(s + 1));

        Rng ej = root.derive("emptyjd");
        for (int j = 0; j < g.n_jobs; ++j)
            w.job_empty_jd.push_back(
                ej.derive(static_cast<std::uint64_t>(j)).bernoulli(g.empty_jd_fraction) ? 1 : 0);
        return w;
    }

    double affinity(int job, int talent) const {
        const auto& u = job_lat[static_cast<std::size_t>(job)];
        const auto& v = talent_lat[static_cast<std::size_t>(talent)];
        double d = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) d += u[i] * v[i];
        return d;
    }

    // Signed dominant skill of the job decides the query bucket.
    int query_bucket(int job) const {
        const auto& u = job_lat[static_cast<std::size_t>(job)];
        int arg = 0;
        for (int d = 1; d < static_cast<int>(u.size()); ++d)
            if (std::abs(u[static_cast<std::size_t>(d)]) > std::abs(u[static_cast<std::size_t>(arg)])) arg = d;
        int signed_bucket = 2 * arg + (u[static_cast<std::size_t>(arg)] >= 0.0 ? 1 : 0);
        return signed_bucket % cfg.n_queries;
    }

    // Latent weights rendered as repeated signed skill tokens, so the
    // bag-of-words embedding of the text carries the latent vector.
    static std::string latent_text(const std::vector<double>& lat) {
        std::string out;
        for (std::size_t d = 0; d < lat.size(); ++d) {
            int reps = static_cast<int>(std::llround(std::abs(lat[d]) * 3.0));
            std::string tok = (lat[d] >= 0.0 ? "s" : "ns") + std::to_string(d);
            for (int i = 0; i < reps; ++i) {
                if (!out.empty()) out += ' ';
                out += tok;
            }
        }
        return out;
    }

    std::string jd_text(int job) const {
        if (job_empty_jd[static_cast<std::size_t>(job)]) return "";
        return latent_text(job_lat[static_cast<std::size_t>(job)]);
    }
    std::string resume_text(int talent) const {
        return latent_text(talent_lat[static_cast<std::size_t>(talent)]);
    }

    // True latent affinity for a generated record; ranks test candidates
    // perfectly on the noise-free relevance labels.
    double oracle_score(const InteractionRecord& rec) const {
        auto parse = [](const std::string& id, char prefix, int limit) {
            if (id.size() < 2 || id[0] != prefix)
                throw data_error("oracle_score: unknown id " + id);
            int v = 0;
            for (std::size_t i = 1; i < id.size(); ++i) {
                if (id[i] < '0' || id[i] > '9') throw data_error("oracle_score: unknown id " + id);
                v = v * 10 + (id[i] - '0');
            }
            if (v >= limit) throw data_error("oracle_score: unknown id " + id);
            return v;
        };
        int job = parse(rec.job_id, 'j', cfg.n_jobs);
        int talent = parse(rec.talent_id, 't', cfg.n_talents);
        return affinity(job, talent);
    }

    void save(const std::string& path) const;
    static LatentWorld load(const std::string& path);
};

struct GenOutput {
    std::vector<InteractionRecord> train;
    std::vector<InteractionRecord> test;
};

// Single-threaded sequential generation: recruiter histories accumulate in
// session order, and every random draw comes from a per-purpose substream of
// the seed, so the output is byte-stable.
inline GenOutput generate(LatentWorld& w) {
    const GenConfig& g = w.cfg;
    Rng root = Rng::seeded(g.gen_seed);
    GenOutput out;

    int test_sessions = static_cast<int>(std::llround(g.test_fraction * g.n_sessions));
    test_sessions = std::max(1, std::min(g.n_sessions - 1, test_sessions));
    int train_sessions = g.n_sessions - test_sessions;

    // Recruiters take sessions round-robin over reshuffled cycles: role
    // marginals stay within integer-rounding distance of the configured mix.
    std::vector<int> order(static_cast<std::size_t>(g.n_recruiters));
    for (int i = 0; i < g.n_recruiters; ++i) order[static_cast<std::size_t>(i)] = i;
    std::size_t cursor = order.size();
    std::uint64_t cycle = 0;
    Rng cycles = root.derive("cycles");

    std::vector<std::deque<std::string>> history(static_cast<std::size_t>(g.n_recruiters));
    Rng sessions = root.derive("session");
    const std::int64_t t0 = 1700000000;

    for (int si = 0; si < g.n_sessions; ++si) {
        if (cursor == order.size()) {
            cycles.derive(cycle++).shuffle(order);
            cursor = 0;
        }
        int recruiter = order[cursor++];
        Role role = w.recruiter_role[static_cast<std::size_t>(recruiter)];
        int slot = LatentWorld::role_slot(role);

        Rng s = sessions.derive(static_cast<std::uint64_t>(si));
        int job = static_cast<int>(s.next_below(static_cast<std::uint64_t>(g.n_jobs)));

        std::unordered_set<int> seen;
        std::vector<int> cands;
        while (static_cast<int>(cands.size()) < g.session_size) {
            int c = static_cast<int>(s.next_below(static_cast<std::uint64_t>(g.n_talents)));
            if (seen.insert(c).second) cands.push_back(c);
        }

        std::vector<std::string> hist_snapshot(history[static_cast<std::size_t>(recruiter)].begin(),
                                               history[static_cast<std::size_t>(recruiter)].end());
        bool is_test = si >= train_sessions;
        std::vector<InteractionRecord>& sink = is_test ? out.test : out.train;

        for (int pos = 0; pos < g.session_size; ++pos) {
            int talent = cands[static_cast<std::size_t>(pos)];
            double aff = w.affinity(job, talent);

            InteractionRecord rec;
            rec.recruiter_id = "r" + std::to_string(recruiter);
            rec.role = role;
            rec.query_id = "q" + std::to_string(w.query_bucket(job));
            rec.talent_id = "t" + std::to_string(talent);
            rec.job_id = "j" + std::to_string(job);
            rec.jd_text = w.jd_text(job);
            rec.resume_text = w.resume_text(talent);
            rec.history_talent_ids = hist_snapshot;
            rec.session_id = "s" + std::to_string(si);
            rec.timestamp = t0 + static_cast<std::int64_t>(si) * 300 + pos;

            rec.label_relevant = aff > g.relevance_threshold ? 1 : 0;

            double p_click = squash(g.click_sharpness * aff +
                                    g.role_click_bias[static_cast<std::size_t>(slot)]);
            int click = s.bernoulli(p_click) ? 1 : 0;
            bool cflip = s.bernoulli(g.role_flip_click[static_cast<std::size_t>(slot)]);
            if (cflip) click = 1 - click;
            rec.label_click = click;

            int apply = 0;
            w.stats[slot].records += 1;
            w.stats[slot].click_flips += cflip ? 1 : 0;
            if (click == 1) {
                double p_apply = squash(g.apply_sharpness * aff + g.apply_bias);
                apply = s.bernoulli(p_apply) ? 1 : 0;
                bool aflip = s.bernoulli(g.role_flip_apply[static_cast<std::size_t>(slot)]);
                if (aflip) apply = 1 - apply;
                w.stats[slot].clicks += 1;
                w.stats[slot].apply_flips += aflip ? 1 : 0;
                w.stats[slot].applies += apply;
            }
            rec.label_apply = apply;
            validate_record(rec);
            sink.push_back(std::move(rec));
        }
        // Clicked candidates enter the recruiter's history, newest first.
        auto& h = history[static_cast<std::size_t>(recruiter)];
        const auto& emitted = sink;
        for (std::size_t k = emitted.size() - static_cast<std::size_t>(g.session_size);
             k < emitted.size(); ++k) {
            if (emitted[k].label_click != 1) continue;
            h.push_front(emitted[k].talent_id);
            if (static_cast<int>(h.size()) > g.history_cap) h.pop_back();
        }
    }
    w.train_records = static_cast<long long>(out.train.size());
    w.test_records = static_cast<long long>(out.test.size());
    return out;
}

inline void LatentWorld::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["gen_seed"] = cfg.gen_seed;
    j["latent_dim"] = cfg.latent_dim;
    j["n_recruiters"] = cfg.n_recruiters;
    j["n_talents"] = cfg.n_talents;
    j["n_jobs"] = cfg.n_jobs;
    j["n_queries"] = cfg.n_queries;
    j["relevance_threshold"] = cfg.relevance_threshold;
    j["click_sharpness"] = cfg.click_sharpness;
    j["apply_sharpness"] = cfg.apply_sharpness;
    j["apply_bias"] = cfg.apply_bias;
    j["role_mix"] = cfg.role_mix;
    j["role_click_bias"] = cfg.role_click_bias;
    j["role_flip_click"] = cfg.role_flip_click;
    j["role_flip_apply"] = cfg.role_flip_apply;
    std::vector<std::string> roles;
    for (Role r : recruiter_role) roles.push_back(role_name(r));
    j["recruiter_roles"] = roles;
    j["job_empty_jd"] = job_empty_jd;
    j["job_latents"] = job_lat;
    j["talent_latents"] = talent_lat;
    nlohmann::ordered_json st;
    for (int s = 0; s < 3; ++s) {
        nlohmann::ordered_json one;
        one["records"] = stats[s].records;
        one["click_flips"] = stats[s].click_flips;
        one["clicks"] = stats[s].clicks;
        one["apply_flips"] = stats[s].apply_flips;
        one["applies"] = stats[s].applies;
        st[role_name(static_cast<Role>(s + 1))] = one;
    }
    j["role_stats"] = st;
    j["train_records"] = train_records;
    j["test_records"] = test_records;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write world summary " + path);
    out << j.dump(1) << "\n";
}

inline LatentWorld LatentWorld::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open world summary " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("world summary " + path + ": " + e.what());
    }
    LatentWorld w;
    try {
        w.cfg.gen_seed = j.at("gen_seed").get<std::uint64_t>();
        w.cfg.latent_dim = j.at("latent_dim").get<int>();
        w.cfg.n_recruiters = j.at("n_recruiters").get<int>();
        w.cfg.n_talents = j.at("n_talents").get<int>();
        w.cfg.n_jobs = j.at("n_jobs").get<int>();
        w.cfg.n_queries = j.at("n_queries").get<int>();
        w.cfg.relevance_threshold = j.at("relevance_threshold").get<double>();
        w.cfg.click_sharpness = j.at("click_sharpness").get<double>();
        w.cfg.apply_sharpness = j.at("apply_sharpness").get<double>();
        w.cfg.apply_bias = j.at("apply_bias").get<double>();
        w.cfg.role_mix = j.at("role_mix").get<std::vector<double>>();
        w.cfg.role_click_bias = j.at("role_click_bias").get<std::vector<double>>();
        w.cfg.role_flip_click = j.at("role_flip_click").get<std::vector<double>>();
        w.cfg.role_flip_apply = j.at("role_flip_apply").get<std::vector<double>>();
        for (const auto& r : j.at("recruiter_roles")) w.recruiter_role.push_back(role_from_name(r.get<std::string>()));
        w.job_empty_jd = j.at("job_empty_jd").get<std::vector<int>>();
        w.job_lat = j.at("job_latents").get<std::vector<std::vector<double>>>();
        w.talent_lat = j.at("talent_latents").get<std::vector<std::vector<double>>>();
        for (int s = 0; s < 3; ++s) {
            const auto& one = j.at("role_stats").at(role_name(static_cast<Role>(s + 1)));
            w.stats[s].records = one.at("records").get<long long>();
            w.stats[s].click_flips = one.at("click_flips").get<long long>();
            w.stats[s].clicks = one.at("clicks").get<long long>();
            w.stats[s].apply_flips = one.at("apply_flips").get<long long>();
            w.stats[s].applies = one.at("applies").get<long long>();
        }
        w.train_records = j.at("train_records").get<long long>();
        w.test_records = j.at("test_records").get<long long>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error("world summary " + path + ": " + e.what());
    }
    return w;
}

// generate + write train.jsonl, test.jsonl, world.json under dir.
inline LatentWorld generate_dataset(const GenConfig& g, const std::string& dir) {
    std::filesystem::create_directories(dir);
    LatentWorld w = LatentWorld::build(g);
    GenOutput out = generate(w);
    write_jsonl(dir + "/train.jsonl", out.train);
    write_jsonl(dir + "/test.jsonl", out.test);
    w.save(dir + "/world.json");
    return w;
}

}  // namespace rankmoe
