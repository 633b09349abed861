#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rankmoe {

// Error taxonomy. The CLI maps these onto exit codes:
//   usage_error -> 1, data_error -> 2, checkpoint_error -> 3.
// dim_error is a shape/programming contract violation and maps to 1.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class dim_error : public error {
public:
    using error::error;
};

class data_error : public error {
public:
    using error::error;
};

class checkpoint_error : public error {
public:
    using error::error;
};

class usage_error : public error {
public:
    using error::error;
};

template <typename T>
inline bool is_finite(T v) {
    return std::isfinite(static_cast<double>(v));
}

inline std::string shape_str(int rows, int cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace rankmoe
