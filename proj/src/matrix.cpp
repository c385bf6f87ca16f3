// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "avprune/errors.hpp"

namespace avprune {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ConfigError("matrix: data length " + std::to_string(data_.size()) +
                          " does not match shape " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw ValidationError("matrix: non-finite entry at flat index " + std::to_string(i));
        }
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ConfigError("matmul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        auto out_row = out.row(static_cast<std::size_t>(i));
        auto a_row = a.row(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < k_dim; ++k) {
            const double aik = a_row[k];
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < m; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    for (double v : out.data()) {
        if (!std::isfinite(v)) {
            throw ValidationError("matmul: non-finite result entry");
        }
    }
    return out;
}

void softmax_inplace(std::span<double> row) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (double v : row) {
        max_v = std::max(max_v, v);
    }
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - max_v);
        sum += v;
    }
    for (double& v : row) {
        v /= sum;
    }
}

Matrix softmax_rows(const Matrix& m, std::span<const std::size_t> prefix) {
    if (!prefix.empty() && prefix.size() != m.rows()) {
        throw ConfigError("softmax_rows: prefix length " + std::to_string(prefix.size()) +
                          " does not match row count " + std::to_string(m.rows()));
    }
    if (!prefix.empty()) {
        for (std::size_t r = 0; r < prefix.size(); ++r) {
            if (prefix[r] < 1 || prefix[r] > m.cols()) {
                throw ConfigError("softmax_rows: prefix[" + std::to_string(r) + "]=" +
                                  std::to_string(prefix[r]) + " outside [1, " +
                                  std::to_string(m.cols()) + "]");
            }
        }
    }
    Matrix out = m;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(out.rows()); ++r) {
        auto row = out.row(static_cast<std::size_t>(r));
        const std::size_t len = prefix.empty() ? row.size() : prefix[static_cast<std::size_t>(r)];
        softmax_inplace(row.subspan(0, len));
        for (std::size_t c = len; c < row.size(); ++c) {
            row[c] = 0.0;
        }
    }
    return out;
}

Matrix mean_over_heads(std::span<const Matrix> heads) {
    if (heads.empty()) {
        throw ConfigError("mean_over_heads: empty head list");
    }
    for (const Matrix& h : heads) {
        if (!h.same_shape(heads[0])) {
            throw ConfigError("mean_over_heads: shape mismatch " + std::to_string(h.rows()) + "x" +
                              std::to_string(h.cols()) + " vs " + std::to_string(heads[0].rows()) +
                              "x" + std::to_string(heads[0].cols()));
        }
    }
    Matrix out(heads[0].rows(), heads[0].cols());
    const double inv = 1.0 / static_cast<double>(heads.size());
    auto& out_data = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out_data.size()); ++i) {
        double acc = 0.0;
        for (const Matrix& h : heads) {
            acc += h.data()[static_cast<std::size_t>(i)];
        }
        out_data[static_cast<std::size_t>(i)] = acc * inv;
    }
    return out;
}

double max_row_sum_error(const Matrix& m) {
    double worst = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (double v : m.row(r)) {
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

bool is_row_stochastic(const Matrix& m, double tol) {
    for (double v : m.data()) {
        if (v < 0.0) {
            return false;
        }
    }
    return max_row_sum_error(m) <= tol;
}

}  // namespace avprune
