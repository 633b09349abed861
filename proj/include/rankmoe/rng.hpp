#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace rankmoe {

// Counter-based splittable RNG built on the splitmix64 finalizer.
//
// Every stream is identified by a 64-bit key; draw i of a stream is
// mix64(key + i * GOLDEN). Substreams are derived by hashing a tag into the
// key, so any part of the pipeline can claim an independent stream from
// (seed, tag...) without coordinating counters. Pure integer arithmetic:
// identical output on every platform.
class Rng {
public:
    Rng() : key_(0) {}
    explicit Rng(std::uint64_t key) : key_(key) {}

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    // splitmix64 finalizer.
    static std::uint64_t mix64(std::uint64_t z) {
        z += kGolden;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static Rng seeded(std::uint64_t seed) { return Rng(mix64(seed)); }

    // Independent stream addressed by an integer salt.
    Rng derive(std::uint64_t salt) const {
        return Rng(mix64(key_ ^ (salt * 0xD1342543DE82EF95ull + 0x632BE59BD9B4E019ull)));
    }

    // Independent stream addressed by a string tag.
    Rng derive(std::string_view tag) const {
        std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the tag bytes
        for (unsigned char c : tag) {
            h ^= c;
            h *= 0x100000001B3ull;
        }
        return derive(h);
    }

    Rng derive(std::string_view tag, std::uint64_t salt) const {
        return derive(tag).derive(salt);
    }

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    bool bernoulli(double p) { return next_unit() < p; }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~0ull - (~0ull % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    template <typename V>
    void shuffle(std::vector<V>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace rankmoe
