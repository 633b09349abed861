#pragma once

// Naive reference implementations used as oracles. Deliberately written as
// direct loops with no shared code with the library under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace refimpl {

using Mat = std::vector<std::vector<double>>;

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k)
                out[i][j] += a[i][k] * b[k][j];
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
    double mx = *std::max_element(x.begin(), x.end());
    double denom = 0.0;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        denom += out[i];
    }
    for (auto& v : out) v /= denom;
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Three-layer MLP with ReLU after every layer, matching the expert shape.
inline std::vector<double> mlp3_relu(const std::vector<double>& x, const std::vector<Mat>& ws,
                                     const std::vector<std::vector<double>>& bs) {
    std::vector<double> h = x;
    for (std::size_t l = 0; l < ws.size(); ++l) {
        std::vector<double> nxt(ws[l][0].size(), 0.0);
        for (std::size_t j = 0; j < nxt.size(); ++j) {
            double acc = bs[l][j];
            for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * ws[l][i][j];
            nxt[j] = std::max(0.0, acc);
        }
        h = nxt;
    }
    return h;
}

}  // namespace refimpl
