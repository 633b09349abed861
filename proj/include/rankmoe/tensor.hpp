#pragma once

#include <initializer_list>
#include <vector>

#include "rankmoe/common.hpp"

namespace rankmoe {

// Dense 2-D row-major tensor. T is float in production code; tests
// instantiate double for finite-difference oracles.
template <typename T>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;
    std::vector<T> grad;  // empty means "no gradient allocated"
    bool requires_grad = false;

    Tensor() = default;

    Tensor(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw dim_error("tensor shape must be nonnegative, got " + shape_str(r, c));
    }

    Tensor(std::initializer_list<std::initializer_list<T>> init) {
        rows = static_cast<int>(init.size());
        cols = rows ? static_cast<int>(init.begin()->size()) : 0;
        data.reserve(static_cast<std::size_t>(rows) * cols);
        for (const auto& row : init) {
            if (static_cast<int>(row.size()) != cols)
                throw dim_error("ragged initializer for tensor");
            data.insert(data.end(), row.begin(), row.end());
        }
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c, T(0)); }

    std::size_t numel() const { return static_cast<std::size_t>(rows) * cols; }

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    const T* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    T* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape() const { return shape_str(rows, cols); }

    void ensure_grad() {
        if (grad.size() != numel()) grad.assign(numel(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), T(0));
    }

    bool all_finite() const {
        for (T v : data)
            if (!is_finite(v)) return false;
        return true;
    }
};

}  // namespace rankmoe
