#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rankmoe/params.hpp"

namespace rankmoe {

template <typename T>
struct AdamConfig {
    T lr = static_cast<T>(1e-5);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
};

// Adam with bias correction. Moments are keyed by parameter name; gradients
// are consumed and zeroed by step() so the next batch starts clean.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

    long long step_count() const { return t_; }

    void step(ParamSet<T>& params) {
        ++t_;
        double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
        for (auto& e : params.entries()) {
            Tensor<T>& p = *e.tensor;
            if (p.grad.size() != p.numel())
                throw dim_error("adam: missing gradient for parameter " + e.name);
            Slot& s = slots_[e.name];
            if (s.m.size() != p.numel()) {
                s.m.assign(p.numel(), T(0));
                s.v.assign(p.numel(), T(0));
            }
            for (std::size_t i = 0; i < p.numel(); ++i) {
                T g = p.grad[i];
                s.m[i] = cfg_.beta1 * s.m[i] + (T(1) - cfg_.beta1) * g;
                s.v[i] = cfg_.beta2 * s.v[i] + (T(1) - cfg_.beta2) * g * g;
                T mhat = static_cast<T>(s.m[i] / bc1);
                T vhat = static_cast<T>(s.v[i] / bc2);
                p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            p.zero_grad();
        }
    }

private:
    struct Slot {
        std::vector<T> m, v;
    };

    AdamConfig<T> cfg_;
    std::map<std::string, Slot> slots_;
    long long t_ = 0;
};

}  // namespace rankmoe
