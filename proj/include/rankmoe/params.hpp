#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rankmoe/rng.hpp"
#include "rankmoe/tensor.hpp"

namespace rankmoe {

// How a registered tensor is initialized: biases to zero, matrices uniform
// in (-sqrt(1/fan_in), +sqrt(1/fan_in)).
struct InitSpec {
    enum Kind { zeros, uniform_fan } kind = zeros;
    int fan_in = 0;

    static InitSpec zero() { return {zeros, 0}; }
    static InitSpec fan(int fan_in) { return {uniform_fan, fan_in}; }
};

// Named registry over externally-owned parameter tensors, iterated in
// name-sorted order so every consumer (init, optimizer, checkpoint) sees one
// deterministic ordering.
template <typename T>
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor<T>* tensor;
        InitSpec init;
    };

    void add(const std::string& name, Tensor<T>& t, InitSpec init) {
        t.requires_grad = true;
        entries_.push_back({name, &t, init});
        sorted_ = false;
    }

    const std::vector<Entry>& entries() {
        sort_check();
        return entries_;
    }

    Tensor<T>* find(const std::string& name) {
        sort_check();
        for (auto& e : entries_)
            if (e.name == name) return e.tensor;
        return nullptr;
    }

    std::size_t size() {
        sort_check();
        return entries_.size();
    }

    long long total_params() {
        sort_check();
        long long n = 0;
        for (auto& e : entries_) n += static_cast<long long>(e.tensor->numel());
        return n;
    }

    // Seeded init. Each tensor draws from its own substream keyed by name, so
    // values depend only on (seed, name, shape), not on registration order.
    void init_all(const Rng& root) {
        sort_check();
        for (auto& e : entries_) {
            Tensor<T>& t = *e.tensor;
            if (e.init.kind == InitSpec::zeros) {
                std::fill(t.data.begin(), t.data.end(), T(0));
            } else {
                Rng r = root.derive("init").derive(e.name);
                double bound = std::sqrt(1.0 / static_cast<double>(e.init.fan_in));
                for (auto& v : t.data) v = static_cast<T>(r.uniform(-bound, bound));
            }
        }
    }

    void zero_grads() {
        sort_check();
        for (auto& e : entries_) {
            e.tensor->ensure_grad();
            e.tensor->zero_grad();
        }
    }

private:
    void sort_check() {
        if (sorted_) return;
        std::sort(entries_.begin(), entries_.end(),
                  [](const Entry& a, const Entry& b) { return a.name < b.name; });
        for (std::size_t i = 1; i < entries_.size(); ++i)
            if (entries_[i].name == entries_[i - 1].name)
                throw dim_error("duplicate parameter name: " + entries_[i].name);
        sorted_ = true;
    }

    std::vector<Entry> entries_;
    bool sorted_ = true;
};

}  // namespace rankmoe
