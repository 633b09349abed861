#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rankmoe/common.hpp"
#include "rankmoe/rng.hpp"

namespace rankmoe {

// Produces a fixed-width, unit-L2 embedding for a document. doc_id is the
// lookup key for file-backed embeddings; the hash stub ignores it and uses
// the text alone.
template <typename T>
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<T> embed(const std::string& doc_id, const std::string& text) const = 0;
};

// Stand-in for a pretrained sentence encoder: hashes whitespace tokens into
// dim signed buckets (+1/-1 per occurrence) and L2-normalizes the counts.
// Bag-of-words, so token order is irrelevant; a pure function of the bytes,
// so output is identical across processes. Empty text maps to the zero
// vector.
template <typename T>
class HashTextEmbedder : public TextEmbedder<T> {
public:
    explicit HashTextEmbedder(int dim) : dim_(dim) {
        if (dim < 1) throw usage_error("text embedding dim must be >= 1");
    }

    int dim() const override { return dim_; }

    std::vector<T> embed(const std::string&, const std::string& text) const override {
        std::vector<T> v(static_cast<std::size_t>(dim_), T(0));
        std::size_t i = 0;
        const std::size_t n = text.size();
        bool any = false;
        while (i < n) {
            while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t start = i;
            while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i == start) break;
            std::uint64_t h = token_hash(text.data() + start, i - start);
            std::size_t bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
            v[bucket] += (h >> 63) ? T(-1) : T(1);
            any = true;
        }
        if (!any) return v;
        // counts are small integers, so the sum of squares is exact and the
        // normalized vector does not depend on token order
        double sq = 0;
        for (T c : v) sq += static_cast<double>(c) * static_cast<double>(c);
        if (sq == 0) return v;  // all signed counts cancelled
        double inv = 1.0 / std::sqrt(sq);
        for (auto& c : v) c = static_cast<T>(static_cast<double>(c) * inv);
        return v;
    }

private:
    static std::uint64_t token_hash(const char* s, std::size_t len) {
        std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a, then mixed
        for (std::size_t i = 0; i < len; ++i) {
            h ^= static_cast<unsigned char>(s[i]);
            h *= 0x100000001B3ull;
        }
        return Rng::mix64(h);
    }

    int dim_;
};

// Precomputed embeddings keyed by document id. File format: one record per
// line, "<doc_id>\t<v1> <v2> ... <vdim>". Rows are L2-normalized on load.
template <typename T>
class FileTextEmbedder : public TextEmbedder<T> {
public:
    FileTextEmbedder(const std::string& path, int expected_dim) : dim_(expected_dim) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open embedding file: " + path);
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw data_error(path + " line " + std::to_string(line_no) + ": expected <id>\\t<floats>");
            std::string id = line.substr(0, tab);
            std::istringstream vals(line.substr(tab + 1));
            std::vector<T> v;
            v.reserve(static_cast<std::size_t>(expected_dim));
            double x;
            while (vals >> x) v.push_back(static_cast<T>(x));
            if (static_cast<int>(v.size()) != expected_dim)
                throw data_error(path + " line " + std::to_string(line_no) + ": dimension " +
                                 std::to_string(v.size()) + " != expected " + std::to_string(expected_dim));
            double sq = 0;
            for (T c : v) sq += static_cast<double>(c) * static_cast<double>(c);
            if (sq > 0) {
                double inv = 1.0 / std::sqrt(sq);
                for (auto& c : v) c = static_cast<T>(static_cast<double>(c) * inv);
            }
            if (!by_id_.emplace(std::move(id), std::move(v)).second)
                throw data_error(path + " line " + std::to_string(line_no) + ": duplicate doc id");
        }
    }

    int dim() const override { return dim_; }

    std::vector<T> embed(const std::string& doc_id, const std::string&) const override {
        auto it = by_id_.find(doc_id);
        if (it == by_id_.end())
            throw data_error("embedding file has no entry for doc id '" + doc_id + "'");
        return it->second;
    }

private:
    int dim_;
    std::unordered_map<std::string, std::vector<T>> by_id_;
};

}  // namespace rankmoe
