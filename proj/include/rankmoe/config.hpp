#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rankmoe/common.hpp"
#include "rankmoe/rng.hpp"

namespace rankmoe {

// Model variants. Ablations nest: each strips one more mechanism.
enum class Ablation {
    full,                   // everything on
    no_jd,                  // JD encoder replaced by a plain job-ID embedding
    no_jd_no_mtl,           // additionally: no shared experts, single-task branches
    no_jd_no_mtl_no_pmmoe,  // additionally: gates conditioned on x, not the role
    no_llm_summary,         // summaries become raw concatenation
};

inline const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_jd: return "no_jd";
        case Ablation::no_jd_no_mtl: return "no_jd_no_mtl";
        case Ablation::no_jd_no_mtl_no_pmmoe: return "no_jd_no_mtl_no_pmmoe";
        case Ablation::no_llm_summary: return "no_llm_summary";
    }
    return "?";
}

inline Ablation ablation_from_name(const std::string& s) {
    for (Ablation a : {Ablation::full, Ablation::no_jd, Ablation::no_jd_no_mtl,
                       Ablation::no_jd_no_mtl_no_pmmoe, Ablation::no_llm_summary})
        if (s == ablation_name(a)) return a;
    throw usage_error("unknown ablation '" + s +
                      "' (expected full, no_jd, no_jd_no_mtl, no_jd_no_mtl_no_pmmoe, "
                      "no_llm_summary)");
}

struct TrainConfig {
    std::uint64_t seed = 42;
    Ablation ablation = Ablation::full;

    int id_dim = 32;
    int text_dim = 1024;
    int jd_dim = 1088;  // projected JD part + attention part (id_dim wide)
    int n_experts = 3;
    std::vector<int> expert_hidden = {128, 64, 32};
    std::vector<int> gate_hidden = {32, 16};
    std::vector<int> tower_a = {512, 256, 128};
    std::vector<int> tower_b = {256, 128, 64};
    int max_history = 30;
    int top_k_history_for_summary = 5;
    bool relevance_stop_gradient = false;

    double dropout = 0.2;
    double lr = 1e-5;
    int batch_size = 1024;
    int max_steps = 20000;
    double lambda_ctr = 1.0;
    double lambda_cvr = 1.0;
    double lambda_relv = 1.0;
    int log_every = 100;
    int eval_every = 1000;
    int eval_sample = 2048;

    std::string text_embedder = "hash";  // hash | file
    std::string embeddings_file;
    std::string summary_provider = "template";  // template | file
    std::string summaries_file;

    std::string data_dir = "data";
    std::string checkpoint = "model.rmoe";

    int ablate_seeds = 5;
    std::vector<int> ablate_expert_counts = {1, 3, 5, 10};
    std::vector<int> ablate_history_lengths = {1, 5, 10, 30, 50};
};

// Synthetic-world parameters. Role-indexed triples are ordered SA, SG, TL.
struct GenConfig {
    std::uint64_t gen_seed = 7;
    int n_recruiters = 60;
    int n_talents = 3000;
    int n_jobs = 120;
    int n_queries = 16;
    int n_sessions = 3000;
    int session_size = 20;
    double test_fraction = 0.1666667;
    int latent_dim = 8;
    std::vector<double> role_mix = {0.50, 0.12, 0.38};
    std::vector<double> role_click_bias = {1.0, -0.2, 0.0};
    std::vector<double> role_flip_click = {0.30, 0.05, 0.08};
    std::vector<double> role_flip_apply = {0.10, 0.02, 0.03};
    double click_sharpness = 4.0;
    double apply_sharpness = 4.0;
    double apply_bias = -0.5;
    double relevance_threshold = 0.15;
    int history_cap = 50;
    double empty_jd_fraction = 0.1;
};

struct Config {
    TrainConfig train;
    GenConfig gen;
};

namespace detail {

inline long long parse_ll(const std::string& v, const std::string& key) {
    char* end = nullptr;
    errno = 0;
    long long x = std::strtoll(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0')
        throw usage_error("config: bad integer for " + key + ": '" + v + "'");
    return x;
}

inline int parse_int(const std::string& v, const std::string& key) {
    long long x = parse_ll(v, key);
    if (x < -2147483648LL || x > 2147483647LL)
        throw usage_error("config: integer out of range for " + key + ": '" + v + "'");
    return static_cast<int>(x);
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    char* end = nullptr;
    errno = 0;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0' || v[0] == '-')
        throw usage_error("config: bad unsigned integer for " + key + ": '" + v + "'");
    return x;
}

inline double parse_double(const std::string& v, const std::string& key) {
    char* end = nullptr;
    errno = 0;
    double x = std::strtod(v.c_str(), &end);
    if (errno != 0 || end == v.c_str() || *end != '\0')
        throw usage_error("config: bad number for " + key + ": '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw usage_error("config: bad boolean for " + key + ": '" + v + "' (use true/false)");
}

inline std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    for (const auto& p : split_commas(v)) out.push_back(parse_int(p, key));
    return out;
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& key) {
    std::vector<double> out;
    for (const auto& p : split_commas(v)) out.push_back(parse_double(p, key));
    return out;
}

// Shortest decimal string that parses back to exactly the same double.
inline std::string fmt_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

inline std::string fmt_int_list(const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(xs[i]);
    }
    return s;
}

inline std::string fmt_double_list(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ',';
        s += fmt_double(xs[i]);
    }
    return s;
}

}  // namespace detail

// Applies one key=value pair. Unknown keys are usage errors so typos in a
// config file cannot silently fall back to defaults.
inline void config_set(Config& c, const std::string& key, const std::string& value) {
    using namespace detail;
    TrainConfig& t = c.train;
    GenConfig& g = c.gen;
    if (key == "seed") t.seed = parse_u64(value, key);
    else if (key == "ablation") t.ablation = ablation_from_name(value);
    else if (key == "id_dim") t.id_dim = parse_int(value, key);
    else if (key == "text_dim") t.text_dim = parse_int(value, key);
    else if (key == "jd_dim") t.jd_dim = parse_int(value, key);
    else if (key == "n_experts") t.n_experts = parse_int(value, key);
    else if (key == "expert_hidden") t.expert_hidden = parse_int_list(value, key);
    else if (key == "gate_hidden") t.gate_hidden = parse_int_list(value, key);
    else if (key == "tower_a") t.tower_a = parse_int_list(value, key);
    else if (key == "tower_b") t.tower_b = parse_int_list(value, key);
    else if (key == "max_history") t.max_history = parse_int(value, key);
    else if (key == "top_k_history_for_summary") t.top_k_history_for_summary = parse_int(value, key);
    else if (key == "relevance_stop_gradient") t.relevance_stop_gradient = parse_bool(value, key);
    else if (key == "dropout") t.dropout = parse_double(value, key);
    else if (key == "lr") t.lr = parse_double(value, key);
    else if (key == "batch_size") t.batch_size = parse_int(value, key);
    else if (key == "max_steps") t.max_steps = parse_int(value, key);
    else if (key == "lambda_ctr") t.lambda_ctr = parse_double(value, key);
    else if (key == "lambda_cvr") t.lambda_cvr = parse_double(value, key);
    else if (key == "lambda_relv") t.lambda_relv = parse_double(value, key);
    else if (key == "log_every") t.log_every = parse_int(value, key);
    else if (key == "eval_every") t.eval_every = parse_int(value, key);
    else if (key == "eval_sample") t.eval_sample = parse_int(value, key);
    else if (key == "text_embedder") t.text_embedder = value;
    else if (key == "embeddings_file") t.embeddings_file = value;
    else if (key == "summary_provider") t.summary_provider = value;
    else if (key == "summaries_file") t.summaries_file = value;
    else if (key == "data_dir") t.data_dir = value;
    else if (key == "checkpoint") t.checkpoint = value;
    else if (key == "ablate_seeds") t.ablate_seeds = parse_int(value, key);
    else if (key == "ablate_expert_counts") t.ablate_expert_counts = parse_int_list(value, key);
    else if (key == "ablate_history_lengths") t.ablate_history_lengths = parse_int_list(value, key);
    else if (key == "gen_seed") g.gen_seed = parse_u64(value, key);
    else if (key == "n_recruiters") g.n_recruiters = parse_int(value, key);
    else if (key == "n_talents") g.n_talents = parse_int(value, key);
    else if (key == "n_jobs") g.n_jobs = parse_int(value, key);
    else if (key == "n_queries") g.n_queries = parse_int(value, key);
    else if (key == "n_sessions") g.n_sessions = parse_int(value, key);
    else if (key == "session_size") g.session_size = parse_int(value, key);
    else if (key == "test_fraction") g.test_fraction = parse_double(value, key);
    else if (key == "latent_dim") g.latent_dim = parse_int(value, key);
    else if (key == "role_mix") g.role_mix = parse_double_list(value, key);
    else if (key == "role_click_bias") g.role_click_bias = parse_double_list(value, key);
    else if (key == "role_flip_click") g.role_flip_click = parse_double_list(value, key);
    else if (key == "role_flip_apply") g.role_flip_apply = parse_double_list(value, key);
    else if (key == "click_sharpness") g.click_sharpness = parse_double(value, key);
    else if (key == "apply_sharpness") g.apply_sharpness = parse_double(value, key);
    else if (key == "apply_bias") g.apply_bias = parse_double(value, key);
    else if (key == "relevance_threshold") g.relevance_threshold = parse_double(value, key);
    else if (key == "history_cap") g.history_cap = parse_int(value, key);
    else if (key == "empty_jd_fraction") g.empty_jd_fraction = parse_double(value, key);
    else throw usage_error("config: unknown key '" + key + "'");
}

// key = value lines; '#' starts a comment; blank lines skipped.
inline void config_parse_stream(Config& c, std::istream& in, const std::string& source) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string s) {
            std::size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            std::size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        std::string body = strip(line);
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string::npos)
            throw usage_error("config: " + source + " line " + std::to_string(line_no) +
                              ": expected key = value");
        std::string key = strip(body.substr(0, eq));
        std::string value = strip(body.substr(eq + 1));
        if (key.empty())
            throw usage_error("config: " + source + " line " + std::to_string(line_no) +
                              ": empty key");
        try {
            config_set(c, key, value);
        } catch (const usage_error& e) {
            throw usage_error(std::string(e.what()) + " (" + source + " line " +
                              std::to_string(line_no) + ")");
        }
    }
}

inline void config_load_file(Config& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("config: cannot open " + path);
    config_parse_stream(c, in, path);
}

inline void config_validate(const Config& c) {
    const TrainConfig& t = c.train;
    const GenConfig& g = c.gen;
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw usage_error("config: " + msg);
    };
    need(t.id_dim >= 1 && t.text_dim >= 1, "id_dim and text_dim must be >= 1");
    need(t.jd_dim > t.id_dim, "jd_dim must exceed id_dim (attention part is id_dim wide)");
    need(t.n_experts >= 1, "n_experts must be >= 1");
    auto all_pos = [](const std::vector<int>& xs) {
        if (xs.empty()) return false;
        for (int x : xs)
            if (x < 1) return false;
        return true;
    };
    need(all_pos(t.expert_hidden), "expert_hidden must be a nonempty list of positive sizes");
    need(all_pos(t.gate_hidden), "gate_hidden must be a nonempty list of positive sizes");
    need(all_pos(t.tower_a), "tower_a must be a nonempty list of positive sizes");
    need(all_pos(t.tower_b), "tower_b must be a nonempty list of positive sizes");
    need(t.max_history >= 0, "max_history must be >= 0");
    need(t.top_k_history_for_summary >= 0, "top_k_history_for_summary must be >= 0");
    need(t.dropout >= 0.0 && t.dropout < 1.0, "dropout must be in [0, 1)");
    need(t.lr > 0.0, "lr must be positive");
    need(t.batch_size >= 1, "batch_size must be >= 1");
    need(t.max_steps >= 1, "max_steps must be >= 1");
    need(t.lambda_ctr >= 0.0 && t.lambda_cvr >= 0.0 && t.lambda_relv >= 0.0,
         "loss weights must be nonnegative");
    need(t.lambda_ctr + t.lambda_cvr + t.lambda_relv > 0.0,
         "at least one loss weight must be positive");
    need(t.log_every >= 1 && t.eval_every >= 1, "log_every and eval_every must be >= 1");
    need(t.eval_sample >= 1, "eval_sample must be >= 1");
    need(t.text_embedder == "hash" || t.text_embedder == "file",
         "text_embedder must be hash or file");
    need(t.text_embedder != "file" || !t.embeddings_file.empty(),
         "text_embedder=file requires embeddings_file");
    need(t.summary_provider == "template" || t.summary_provider == "file",
         "summary_provider must be template or file");
    need(t.summary_provider != "file" || !t.summaries_file.empty(),
         "summary_provider=file requires summaries_file");
    need(t.ablate_seeds >= 1, "ablate_seeds must be >= 1");
    need(all_pos(t.ablate_expert_counts), "ablate_expert_counts must be positive");
    need(all_pos(t.ablate_history_lengths), "ablate_history_lengths must be positive");

    need(g.n_recruiters >= 1 && g.n_talents >= 2 && g.n_jobs >= 1 && g.n_queries >= 1,
         "world entity counts must be positive (and n_talents >= 2)");
    need(g.n_sessions >= 1 && g.session_size >= 1, "n_sessions and session_size must be >= 1");
    need(g.session_size <= g.n_talents, "session_size cannot exceed n_talents");
    need(g.test_fraction > 0.0 && g.test_fraction < 1.0, "test_fraction must be in (0, 1)");
    need(g.latent_dim >= 1, "latent_dim must be >= 1");
    auto is_triple = [](const std::vector<double>& xs) { return xs.size() == 3; };
    need(is_triple(g.role_mix) && is_triple(g.role_click_bias) && is_triple(g.role_flip_click) &&
             is_triple(g.role_flip_apply),
         "role_* lists must have exactly 3 entries (SA, SG, TL)");
    double mix_sum = 0.0;
    for (double m : g.role_mix) {
        need(m >= 0.0, "role_mix entries must be nonnegative");
        mix_sum += m;
    }
    need(std::abs(mix_sum - 1.0) < 1e-6, "role_mix must sum to 1");
    for (double p : g.role_flip_click) need(p >= 0.0 && p < 0.5, "role_flip_click must be in [0, 0.5)");
    for (double p : g.role_flip_apply) need(p >= 0.0 && p < 0.5, "role_flip_apply must be in [0, 0.5)");
    need(g.click_sharpness > 0.0 && g.apply_sharpness > 0.0, "sharpness must be positive");
    need(g.history_cap >= 0, "history_cap must be >= 0");
    need(g.empty_jd_fraction >= 0.0 && g.empty_jd_fraction <= 1.0,
         "empty_jd_fraction must be in [0, 1]");
}

// Key/value pairs that determine checkpoint compatibility: everything that
// fixes tensor shapes or changes what the tensors mean (vocabulary
// capacities, architecture, input pipeline). Optimizer and schedule knobs
// are deliberately absent so e.g. resuming with a different lr still loads.
inline std::vector<std::pair<std::string, std::string>> config_digest_fields(const Config& c) {
    using namespace detail;
    const TrainConfig& t = c.train;
    const GenConfig& g = c.gen;
    return {
        {"ablation", ablation_name(t.ablation)},
        {"expert_hidden", fmt_int_list(t.expert_hidden)},
        {"gate_hidden", fmt_int_list(t.gate_hidden)},
        {"id_dim", std::to_string(t.id_dim)},
        {"jd_dim", std::to_string(t.jd_dim)},
        {"max_history", std::to_string(t.max_history)},
        {"n_experts", std::to_string(t.n_experts)},
        {"n_jobs", std::to_string(g.n_jobs)},
        {"n_queries", std::to_string(g.n_queries)},
        {"n_recruiters", std::to_string(g.n_recruiters)},
        {"n_talents", std::to_string(g.n_talents)},
        {"summary_provider", t.summary_provider},
        {"text_dim", std::to_string(t.text_dim)},
        {"text_embedder", t.text_embedder},
        {"top_k_history_for_summary", std::to_string(t.top_k_history_for_summary)},
        {"tower_a", fmt_int_list(t.tower_a)},
        {"tower_b", fmt_int_list(t.tower_b)},
    };
}

// 32-byte structural digest: four independently salted splitmix lanes over
// the canonical field serialization. Changing any shape-determining field
// flips the digest; changing lr, steps, or noise knobs does not.
inline std::array<std::uint8_t, 32> config_digest(const Config& c) {
    std::string s;
    for (const auto& [k, v] : config_digest_fields(c)) {
        s += k;
        s += '=';
        s += v;
        s += '\n';
    }
    std::array<std::uint8_t, 32> out{};
    for (std::uint64_t lane = 0; lane < 4; ++lane) {
        std::uint64_t h = Rng::mix64(0x9e3779b97f4a7c15ULL * (lane + 1));
        for (unsigned char ch : s) h = Rng::mix64(h ^ (ch + (lane << 8) + 1));
        for (int b = 0; b < 8; ++b) out[lane * 8 + b] = static_cast<std::uint8_t>(h >> (8 * b));
    }
    return out;
}

inline std::string digest_hex(const std::array<std::uint8_t, 32>& d) {
    static const char* hexd = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (std::uint8_t b : d) {
        s += hexd[b >> 4];
        s += hexd[b & 0xf];
    }
    return s;
}

// Full dump in config-file syntax; parsing it back reproduces the config.
inline std::string config_serialize(const Config& c) {
    using namespace detail;
    const TrainConfig& t = c.train;
    const GenConfig& g = c.gen;
    std::ostringstream o;
    o << "# model\n";
    o << "seed = " << t.seed << "\n";
    o << "ablation = " << ablation_name(t.ablation) << "\n";
    o << "id_dim = " << t.id_dim << "\n";
    o << "text_dim = " << t.text_dim << "\n";
    o << "jd_dim = " << t.jd_dim << "\n";
    o << "n_experts = " << t.n_experts << "\n";
    o << "expert_hidden = " << fmt_int_list(t.expert_hidden) << "\n";
    o << "gate_hidden = " << fmt_int_list(t.gate_hidden) << "\n";
    o << "tower_a = " << fmt_int_list(t.tower_a) << "\n";
    o << "tower_b = " << fmt_int_list(t.tower_b) << "\n";
    o << "max_history = " << t.max_history << "\n";
    o << "top_k_history_for_summary = " << t.top_k_history_for_summary << "\n";
    o << "relevance_stop_gradient = " << (t.relevance_stop_gradient ? "true" : "false") << "\n";
    o << "# training\n";
    o << "dropout = " << fmt_double(t.dropout) << "\n";
    o << "lr = " << fmt_double(t.lr) << "\n";
    o << "batch_size = " << t.batch_size << "\n";
    o << "max_steps = " << t.max_steps << "\n";
    o << "lambda_ctr = " << fmt_double(t.lambda_ctr) << "\n";
    o << "lambda_cvr = " << fmt_double(t.lambda_cvr) << "\n";
    o << "lambda_relv = " << fmt_double(t.lambda_relv) << "\n";
    o << "log_every = " << t.log_every << "\n";
    o << "eval_every = " << t.eval_every << "\n";
    o << "eval_sample = " << t.eval_sample << "\n";
    o << "# inputs\n";
    o << "text_embedder = " << t.text_embedder << "\n";
    o << "embeddings_file = " << t.embeddings_file << "\n";
    o << "summary_provider = " << t.summary_provider << "\n";
    o << "summaries_file = " << t.summaries_file << "\n";
    o << "data_dir = " << t.data_dir << "\n";
    o << "checkpoint = " << t.checkpoint << "\n";
    o << "# ablation harness\n";
    o << "ablate_seeds = " << t.ablate_seeds << "\n";
    o << "ablate_expert_counts = " << fmt_int_list(t.ablate_expert_counts) << "\n";
    o << "ablate_history_lengths = " << fmt_int_list(t.ablate_history_lengths) << "\n";
    o << "# generator\n";
    o << "gen_seed = " << g.gen_seed << "\n";
    o << "n_recruiters = " << g.n_recruiters << "\n";
    o << "n_talents = " << g.n_talents << "\n";
    o << "n_jobs = " << g.n_jobs << "\n";
    o << "n_queries = " << g.n_queries << "\n";
    o << "n_sessions = " << g.n_sessions << "\n";
    o << "session_size = " << g.session_size << "\n";
    o << "test_fraction = " << fmt_double(g.test_fraction) << "\n";
    o << "latent_dim = " << g.latent_dim << "\n";
    o << "role_mix = " << fmt_double_list(g.role_mix) << "\n";
    o << "role_click_bias = " << fmt_double_list(g.role_click_bias) << "\n";
    o << "role_flip_click = " << fmt_double_list(g.role_flip_click) << "\n";
    o << "role_flip_apply = " << fmt_double_list(g.role_flip_apply) << "\n";
    o << "click_sharpness = " << fmt_double(g.click_sharpness) << "\n";
    o << "apply_sharpness = " << fmt_double(g.apply_sharpness) << "\n";
    o << "apply_bias = " << fmt_double(g.apply_bias) << "\n";
    o << "relevance_threshold = " << fmt_double(g.relevance_threshold) << "\n";
    o << "history_cap = " << g.history_cap << "\n";
    o << "empty_jd_fraction = " << fmt_double(g.empty_jd_fraction) << "\n";
    return o.str();
}

// Small preset that trains in seconds on a single core. Shapes shrink, the
// wiring does not: every code path of the full model stays exercised.
inline Config desk_config() {
    Config c;
    c.train.id_dim = 16;
    c.train.text_dim = 32;
    c.train.jd_dim = 32;
    c.train.expert_hidden = {32, 16, 8};
    c.train.gate_hidden = {16, 8};
    c.train.tower_a = {64, 32, 16};
    c.train.tower_b = {32, 16, 8};
    c.train.dropout = 0.1;
    c.train.lr = 1e-3;
    c.train.batch_size = 16;
    c.train.max_steps = 3000;
    c.train.eval_sample = 1024;
    return c;
}

}  // namespace rankmoe
