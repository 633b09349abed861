#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rankmoe/common.hpp"

namespace rankmoe {

// Produces the job-description text that gets embedded on the JD side of the
// cross network. Implementations must be pure functions of their arguments:
// serving replays them on request fields alone, so no hidden state is
// allowed.
class SummaryProvider {
public:
    virtual ~SummaryProvider() = default;
    virtual std::string summarize(const std::string& job_id, const std::string& jd_text,
                                  const std::vector<std::string>& history_talent_ids) const = 0;
};

// Deterministic template stand-in for an LLM summarizer. Combines the JD
// text with tokens for the top-k most recent historical hires; when the JD
// text is missing it synthesizes a profile from the history alone.
class TemplateSummaryProvider : public SummaryProvider {
public:
    explicit TemplateSummaryProvider(int top_k) : top_k_(top_k) {
        if (top_k < 0) throw usage_error("top_k_history_for_summary must be >= 0");
    }

    std::string summarize(const std::string&, const std::string& jd_text,
                          const std::vector<std::string>& history) const override {
        std::string out;
        if (!jd_text.empty()) {
            out = "jd " + jd_text;
            if (!history.empty() && top_k_ > 0) out += " hires";
        } else {
            out = "profile";
        }
        int k = 0;
        for (const auto& id : history) {
            if (k++ >= top_k_) break;
            out += " hired_" + id;
        }
        return out;
    }

private:
    int top_k_;
};

// Ablation variant: plain concatenation, no template and no top-k cap.
class ConcatSummaryProvider : public SummaryProvider {
public:
    std::string summarize(const std::string&, const std::string& jd_text,
                          const std::vector<std::string>& history) const override {
        std::string out = jd_text;
        for (const auto& id : history) {
            if (!out.empty()) out += " ";
            out += "hired_" + id;
        }
        return out;
    }
};

// Precomputed summaries keyed by job id. File format: "<job_id>\t<text>" per
// line. The seam for plugging in real LLM output.
class FileSummaryProvider : public SummaryProvider {
public:
    explicit FileSummaryProvider(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open summary file: " + path);
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw data_error(path + " line " + std::to_string(line_no) + ": expected <job_id>\\t<text>");
            if (!by_job_.emplace(line.substr(0, tab), line.substr(tab + 1)).second)
                throw data_error(path + " line " + std::to_string(line_no) + ": duplicate job id");
        }
    }

    std::string summarize(const std::string& job_id, const std::string&,
                          const std::vector<std::string>&) const override {
        auto it = by_job_.find(job_id);
        if (it == by_job_.end())
            throw data_error("summary file has no entry for job id '" + job_id + "'");
        return it->second;
    }

private:
    std::unordered_map<std::string, std::string> by_job_;
};

}  // namespace rankmoe
