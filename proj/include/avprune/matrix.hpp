// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace avprune {

/// Dense row-major matrix of 64-bit floats. The whole analysis path runs in
/// double precision; float32 appears only in the binary trace format.
class Matrix {
public:
    Matrix() = default;

    // Zero-filled.
    Matrix(std::size_t rows, std::size_t cols);

    // Takes ownership of `data` (length rows*cols); rejects NaN/Inf entries.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Dense product. OpenMP over output rows; each row is computed by exactly one
// thread so results do not depend on the thread count.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with max-subtraction. If `prefix` is nonempty it gives a
// causal prefix length per row: entries at column >= prefix[r] are exactly 0
// and excluded from normalization. prefix[r] must be in [1, cols].
Matrix softmax_rows(const Matrix& m, std::span<const std::size_t> prefix = {});

// Elementwise arithmetic mean of equally shaped matrices. Row-stochastic in,
// row-stochastic out.
Matrix mean_over_heads(std::span<const Matrix> heads);

// In-place softmax of one score row (max-subtracted).
void softmax_inplace(std::span<double> row);

// Largest |row sum - 1| over all rows.
double max_row_sum_error(const Matrix& m);

bool is_row_stochastic(const Matrix& m, double tol = 1e-9);

}  // namespace avprune
