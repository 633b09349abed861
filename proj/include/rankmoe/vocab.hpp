#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rankmoe/common.hpp"

namespace rankmoe {

// Maps external string ids to contiguous indices. Index 0 is the reserved
// unknown/OOV slot (a trainable embedding row); known ids start at 1 in
// first-seen order. capacity_rows bounds size() and equals the embedding
// table's row count.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::string kind, int capacity_rows) : kind_(std::move(kind)), capacity_(capacity_rows) {
        if (capacity_ < 1) throw usage_error("vocabulary capacity must be >= 1, got " + std::to_string(capacity_));
    }

    // Insert-or-get. New ids take the next free index.
    int add(const std::string& id) {
        auto it = index_.find(id);
        if (it != index_.end()) return it->second;
        if (id.empty() || id.front() == '[' || id.find('\n') != std::string::npos)
            throw data_error("vocabulary '" + kind_ + "': id not serializable: '" + id + "'");
        if (size() >= capacity_)
            throw data_error("vocabulary '" + kind_ + "' exceeds configured capacity of " +
                             std::to_string(capacity_) + " rows; raise the matching count in the config");
        ids_.push_back(id);
        int idx = static_cast<int>(ids_.size());
        index_.emplace(id, idx);
        return idx;
    }

    // Unseen ids map to the unknown slot; never errors.
    int lookup(const std::string& id) const {
        auto it = index_.find(id);
        return it == index_.end() ? 0 : it->second;
    }

    // Known ids plus the unknown slot.
    int size() const { return static_cast<int>(ids_.size()) + 1; }

    int capacity() const { return capacity_; }
    const std::string& kind() const { return kind_; }

    const std::string& id_at(int index) const {
        if (index < 1 || index > static_cast<int>(ids_.size()))
            throw data_error("vocabulary '" + kind_ + "': index " + std::to_string(index) + " unknown");
        return ids_[static_cast<std::size_t>(index) - 1];
    }

    void save(std::ostream& out) const {
        out << "[" << kind_ << " " << capacity_ << "]\n";
        for (const auto& id : ids_) out << id << "\n";
    }

    static Vocabulary load(std::istream& in) {
        std::string header;
        if (!std::getline(in, header) || header.size() < 3 || header.front() != '[' || header.back() != ']')
            throw data_error("vocabulary file: bad section header");
        std::string body = header.substr(1, header.size() - 2);
        auto sep = body.rfind(' ');
        if (sep == std::string::npos) throw data_error("vocabulary file: bad section header");
        Vocabulary v(body.substr(0, sep), std::stoi(body.substr(sep + 1)));
        std::string line;
        while (in.peek() != '[' && std::getline(in, line)) {
            if (line.empty()) continue;
            v.add(line);
        }
        return v;
    }

private:
    std::string kind_ = "unnamed";
    int capacity_ = 1;
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> ids_;  // position i holds the id for index i+1
};

}  // namespace rankmoe
