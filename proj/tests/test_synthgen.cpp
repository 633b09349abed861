#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rankmoe/metrics.hpp"
#include "rankmoe/synthgen.hpp"

using namespace rankmoe;

namespace {

GenConfig small_gen() {
    GenConfig g;
    g.gen_seed = 123;
    g.n_recruiters = 20;
    g.n_talents = 200;
    g.n_jobs = 30;
    g.n_queries = 16;
    g.n_sessions = 300;
    g.session_size = 10;
    g.history_cap = 12;
    return g;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("generation is byte-identical across runs") {
    namespace fs = std::filesystem;
    fs::path dir1 = fs::temp_directory_path() / "rankmoe_gen_a";
    fs::path dir2 = fs::temp_directory_path() / "rankmoe_gen_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    GenConfig g = small_gen();
    generate_dataset(g, dir1.string());
    generate_dataset(g, dir2.string());

    for (const char* f : {"train.jsonl", "test.jsonl", "world.json"}) {
        INFO(f);
        REQUIRE(slurp((dir1 / f).string()) == slurp((dir2 / f).string()));
        REQUIRE(!slurp((dir1 / f).string()).empty());
    }

    GenConfig other = g;
    other.gen_seed = 124;
    fs::path dir3 = fs::temp_directory_path() / "rankmoe_gen_c";
    fs::remove_all(dir3);
    generate_dataset(other, dir3.string());
    REQUIRE(slurp((dir1 / "train.jsonl").string()) != slurp((dir3 / "train.jsonl").string()));
}

TEST_CASE("every generated record keeps the funnel ordered") {
    LatentWorld w = LatentWorld::build(small_gen());
    GenOutput out = generate(w);
    REQUIRE(!out.train.empty());
    REQUIRE(!out.test.empty());
    for (const auto& recs : {out.train, out.test})
        for (const auto& r : recs) {
            REQUIRE(r.label_apply <= r.label_click);
            REQUIRE((r.label_relevant == 0 || r.label_relevant == 1));
        }
}

TEST_CASE("train and test sessions are disjoint and chronological") {
    LatentWorld w = LatentWorld::build(small_gen());
    GenOutput out = generate(w);

    std::set<std::string> train_sessions, test_sessions;
    std::int64_t max_train_ts = 0;
    for (const auto& r : out.train) {
        train_sessions.insert(r.session_id);
        max_train_ts = std::max(max_train_ts, r.timestamp);
    }
    std::int64_t min_test_ts = out.test.front().timestamp;
    for (const auto& r : out.test) {
        test_sessions.insert(r.session_id);
        min_test_ts = std::min(min_test_ts, r.timestamp);
    }
    for (const auto& s : test_sessions) REQUIRE(train_sessions.count(s) == 0);
    REQUIRE(min_test_ts > max_train_ts);

    // size split follows the configured fraction
    double frac = static_cast<double>(out.test.size()) /
                  static_cast<double>(out.test.size() + out.train.size());
    REQUIRE(frac == Catch::Approx(w.cfg.test_fraction).margin(0.01));
}

TEST_CASE("role marginals track the configured mix") {
    GenConfig g = small_gen();
    g.n_recruiters = 60;  // enough headcount for integer counts to land within 2%
    g.n_sessions = 1200;
    LatentWorld w = LatentWorld::build(g);
    GenOutput out = generate(w);

    long long by_role[3] = {0, 0, 0};
    long long total = 0;
    for (const auto& recs : {out.train, out.test})
        for (const auto& r : recs) {
            by_role[LatentWorld::role_slot(r.role)] += 1;
            ++total;
        }
    for (int s = 0; s < 3; ++s) {
        double got = static_cast<double>(by_role[s]) / static_cast<double>(total);
        INFO("role slot " << s);
        REQUIRE(std::abs(got - g.role_mix[static_cast<std::size_t>(s)]) < 0.02);
    }
}

TEST_CASE("sourcing assistants carry the highest click label noise") {
    LatentWorld w = LatentWorld::build(small_gen());
    generate(w);

    auto flip_rate = [&](Role r) {
        const auto& s = w.stats[LatentWorld::role_slot(r)];
        REQUIRE(s.records > 0);
        return static_cast<double>(s.click_flips) / static_cast<double>(s.records);
    };
    REQUIRE(flip_rate(Role::SA) > flip_rate(Role::SG));
    REQUIRE(flip_rate(Role::SA) > flip_rate(Role::TL));
}

TEST_CASE("world summary round-trips and recounts the stored noise") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "rankmoe_gen_world";
    fs::remove_all(dir);
    GenConfig g = small_gen();
    LatentWorld w = generate_dataset(g, dir.string());

    LatentWorld back = LatentWorld::load((dir / "world.json").string());
    REQUIRE(back.cfg.n_talents == g.n_talents);
    REQUIRE(back.job_lat == w.job_lat);
    REQUIRE(back.talent_lat == w.talent_lat);
    REQUIRE(back.recruiter_role == w.recruiter_role);
    REQUIRE(back.train_records == w.train_records);
    for (int s = 0; s < 3; ++s) {
        REQUIRE(back.stats[s].records == w.stats[s].records);
        REQUIRE(back.stats[s].click_flips == w.stats[s].click_flips);
        REQUIRE(back.stats[s].clicks == w.stats[s].clicks);
        REQUIRE(back.stats[s].apply_flips == w.stats[s].apply_flips);
        REQUIRE(back.stats[s].applies == w.stats[s].applies);
    }

    // the reloaded world reproduces oracle scores for emitted records
    auto test_recs = read_jsonl((dir / "test.jsonl").string());
    for (std::size_t i = 0; i < std::min<std::size_t>(50, test_recs.size()); ++i)
        REQUIRE(back.oracle_score(test_recs[i]) == w.oracle_score(test_recs[i]));
}

TEST_CASE("oracle ranks noise-free relevance labels perfectly") {
    LatentWorld w = LatentWorld::build(small_gen());
    GenOutput out = generate(w);

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : out.test) {
        scores.push_back(w.oracle_score(r));
        labels.push_back(r.label_relevant);
    }
    REQUIRE(*auc(scores, labels) == 1.0);

    // order invariance: reversing the pool changes nothing
    std::vector<double> rs(scores.rbegin(), scores.rend());
    std::vector<int> rl(labels.rbegin(), labels.rend());
    REQUIRE(*auc(rs, rl) == 1.0);
}

TEST_CASE("oracle rejects ids from outside the world") {
    LatentWorld w = LatentWorld::build(small_gen());
    InteractionRecord r;
    r.job_id = "j7";
    r.talent_id = "t99999";
    REQUIRE_THROWS_AS(w.oracle_score(r), data_error);
    r.talent_id = "t5";
    r.job_id = "x7";
    REQUIRE_THROWS_AS(w.oracle_score(r), data_error);
    r.job_id = "j7";
    REQUIRE(w.oracle_score(r) == w.affinity(7, 5));
}

TEST_CASE("histories hold earlier clicked talents newest first") {
    GenConfig g = small_gen();
    g.history_cap = 5;
    LatentWorld w = LatentWorld::build(g);
    GenOutput out = generate(w);

    // collect all records in generation order, grouped by recruiter
    std::vector<InteractionRecord> all = out.train;
    all.insert(all.end(), out.test.begin(), out.test.end());

    std::map<std::string, std::vector<std::string>> clicked_so_far;  // newest first
    std::map<std::string, std::string> current_session;
    std::map<std::string, std::vector<std::string>> session_clicks;  // this session, oldest first

    long long checked = 0;
    for (const auto& r : all) {
        if (current_session[r.recruiter_id] != r.session_id) {
            // session boundary: fold the finished session's clicks into history
            auto& hist = clicked_so_far[r.recruiter_id];
            for (const auto& t : session_clicks[r.recruiter_id]) hist.insert(hist.begin(), t);
            if (static_cast<int>(hist.size()) > g.history_cap)
                hist.resize(static_cast<std::size_t>(g.history_cap));
            session_clicks[r.recruiter_id].clear();
            current_session[r.recruiter_id] = r.session_id;
        }
        REQUIRE(r.history_talent_ids == clicked_so_far[r.recruiter_id]);
        ++checked;
        if (r.label_click == 1) session_clicks[r.recruiter_id].push_back(r.talent_id);
        REQUIRE(static_cast<int>(r.history_talent_ids.size()) <= g.history_cap);
    }
    REQUIRE(checked > 0);
}

TEST_CASE("rendered texts carry the latent skills") {
    GenConfig g = small_gen();
    LatentWorld w = LatentWorld::build(g);

    bool some_nonempty = false, some_empty = false;
    for (int j = 0; j < g.n_jobs; ++j) {
        std::string text = w.jd_text(j);
        if (w.job_empty_jd[static_cast<std::size_t>(j)]) {
            REQUIRE(text.empty());
            some_empty = true;
        } else if (!text.empty()) {
            some_nonempty = true;
        }
    }
    REQUIRE(some_nonempty);
    REQUIRE(some_empty);

    // dominant-dimension token of a resume appears in its text
    const auto& lat = w.talent_lat[0];
    int arg = 0;
    for (int d = 1; d < static_cast<int>(lat.size()); ++d)
        if (std::abs(lat[static_cast<std::size_t>(d)]) > std::abs(lat[static_cast<std::size_t>(arg)])) arg = d;
    std::string tok = (lat[static_cast<std::size_t>(arg)] >= 0 ? "s" : "ns") + std::to_string(arg);
    REQUIRE(w.resume_text(0).find(tok) != std::string::npos);
}

TEST_CASE("click flip draws happen on the configured scale") {
    // flip counters recomputed as rates stay near the configured rates
    GenConfig g = small_gen();
    g.n_sessions = 1000;
    LatentWorld w = LatentWorld::build(g);
    generate(w);
    for (int s = 0; s < 3; ++s) {
        const auto& st = w.stats[s];
        double rate = static_cast<double>(st.click_flips) / static_cast<double>(st.records);
        REQUIRE(std::abs(rate - g.role_flip_click[static_cast<std::size_t>(s)]) < 0.03);
    }
}
