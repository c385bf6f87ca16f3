// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "avprune/errors.hpp"

namespace avprune::reference {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ConfigError("reference::matmul: dimension mismatch");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m, std::span<const std::size_t> prefix) {
    Matrix out(m.rows(), m.cols());
    std::vector<double> exps(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const std::size_t len = prefix.empty() ? m.cols() : prefix[r];
        double max_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < len; ++c) {
            max_v = std::max(max_v, m(r, c));
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < len; ++c) {
            exps[c] = std::exp(m(r, c) - max_v);
            sum += exps[c];
        }
        for (std::size_t c = 0; c < len; ++c) {
            out(r, c) = exps[c] / sum;
        }
    }
    return out;
}

Matrix mean_over_heads(std::span<const Matrix> heads) {
    if (heads.empty()) {
        throw ConfigError("reference::mean_over_heads: empty head list");
    }
    Matrix out(heads[0].rows(), heads[0].cols());
    for (const Matrix& h : heads) {
        for (std::size_t i = 0; i < out.data().size(); ++i) {
            out.data()[i] += h.data()[i];
        }
    }
    for (double& v : out.data()) {
        v /= static_cast<double>(heads.size());
    }
    return out;
}

}  // namespace avprune::reference
