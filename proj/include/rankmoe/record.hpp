#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankmoe/common.hpp"

namespace rankmoe {

enum class Role : int { SA = 1, SG = 2, TL = 3 };

inline constexpr int kNumRoles = 3;

inline const char* role_name(Role r) {
    switch (r) {
        case Role::SA: return "SA";
        case Role::SG: return "SG";
        case Role::TL: return "TL";
    }
    throw data_error("invalid role value");
}

inline Role role_from_name(const std::string& s) {
    if (s == "SA") return Role::SA;
    if (s == "SG") return Role::SG;
    if (s == "TL") return Role::TL;
    throw data_error("unknown role '" + s + "' (expected SA, SG or TL)");
}

// One impression: a talent shown to a recruiter inside a search session.
struct InteractionRecord {
    std::string recruiter_id;
    Role role = Role::SA;
    std::string query_id;
    std::string talent_id;
    std::string job_id;
    std::string jd_text;
    std::string resume_text;
    std::vector<std::string> history_talent_ids;  // newest first
    std::string session_id;
    int label_click = 0;
    int label_apply = 0;
    int label_relevant = 0;
    std::int64_t timestamp = 0;
};

// Fixed field order so rewritten files hash identically.
inline std::string to_json_line(const InteractionRecord& r) {
    nlohmann::ordered_json j;
    j["recruiter_id"] = r.recruiter_id;
    j["role"] = role_name(r.role);
    j["query_id"] = r.query_id;
    j["talent_id"] = r.talent_id;
    j["job_id"] = r.job_id;
    j["jd_text"] = r.jd_text;
    j["resume_text"] = r.resume_text;
    j["history_talent_ids"] = r.history_talent_ids;
    j["session_id"] = r.session_id;
    j["label_click"] = r.label_click;
    j["label_apply"] = r.label_apply;
    j["label_relevant"] = r.label_relevant;
    j["timestamp"] = r.timestamp;
    return j.dump();
}

inline void validate_record(const InteractionRecord& r, const std::string& where = "record") {
    if (r.recruiter_id.empty() || r.talent_id.empty() || r.session_id.empty())
        throw data_error(where + ": recruiter_id, talent_id and session_id must be nonempty");
    auto binary01 = [&](int v, const char* name) {
        if (v != 0 && v != 1) throw data_error(where + ": " + name + " must be 0 or 1");
    };
    binary01(r.label_click, "label_click");
    binary01(r.label_apply, "label_apply");
    binary01(r.label_relevant, "label_relevant");
    if (r.label_apply == 1 && r.label_click == 0)
        throw data_error(where + ": funnel violation, label_apply=1 with label_click=0");
}

inline InteractionRecord parse_record(const std::string& line, long line_no) {
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(where + ": invalid JSON: " + e.what());
    }
    InteractionRecord r;
    try {
        r.recruiter_id = j.at("recruiter_id").get<std::string>();
        r.role = role_from_name(j.at("role").get<std::string>());
        r.query_id = j.at("query_id").get<std::string>();
        r.talent_id = j.at("talent_id").get<std::string>();
        r.job_id = j.at("job_id").get<std::string>();
        r.jd_text = j.at("jd_text").get<std::string>();
        r.resume_text = j.at("resume_text").get<std::string>();
        r.history_talent_ids = j.at("history_talent_ids").get<std::vector<std::string>>();
        r.session_id = j.at("session_id").get<std::string>();
        r.label_click = j.at("label_click").get<int>();
        r.label_apply = j.at("label_apply").get<int>();
        r.label_relevant = j.at("label_relevant").get<int>();
        r.timestamp = j.at("timestamp").get<std::int64_t>();
    } catch (const data_error&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(where + ": " + e.what());
    }
    validate_record(r, where);
    return r;
}

inline std::vector<InteractionRecord> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open data file: " + path);
    std::vector<InteractionRecord> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(parse_record(line, line_no));
    }
    return out;
}

inline void write_jsonl(const std::string& path, const std::vector<InteractionRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for writing: " + path);
    for (const auto& r : records) out << to_json_line(r) << "\n";
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace rankmoe
