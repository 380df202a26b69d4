#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace camf {

// Plain row-major matrix of doubles for data plumbing (datasets, preprocessing,
// metrics). Gradient-carrying math lives in Tensor; this stays dumb on purpose.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& at(size_t r, size_t c) { return values[r * cols + c]; }
    double at(size_t r, size_t c) const { return values[r * cols + c]; }

    const double* row_ptr(size_t r) const { return values.data() + r * cols; }

    bool operator==(const Matrix&) const = default;
};

}  // namespace camf
