// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/rollout.hpp"

#include <cstdio>
#include <ostream>
#include <string>

#include "avprune/errors.hpp"

namespace avprune {

RolloutState RolloutState::initial(std::size_t n, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("rollout: alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    return {alpha, 0, Matrix::identity(n)};
}

Matrix mix_residual(const Matrix& a, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("mix_residual: alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    if (a.rows() != a.cols()) {
        throw ConfigError("mix_residual: matrix is not square");
    }
    Matrix out = a;
    for (double& v : out.data()) {
        v *= alpha;
    }
    const double residual = 1.0 - alpha;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        out(i, i) += residual;
    }
    return out;
}

RolloutState accumulate(const RolloutState& state, const Matrix& a_next) {
    if (a_next.rows() != state.r.rows() || a_next.cols() != state.r.cols()) {
        throw ConfigError("rollout accumulate: shape mismatch " + std::to_string(a_next.rows()) +
                          "x" + std::to_string(a_next.cols()) + " vs rollout " +
                          std::to_string(state.r.rows()) + "x" + std::to_string(state.r.cols()));
    }
    RolloutState next;
    next.alpha = state.alpha;
    next.layer = state.layer + 1;
    next.r = matmul(mix_residual(a_next, state.alpha), state.r);
    return next;
}

Matrix rollout_at(std::span<const AttentionTensor> attention, std::size_t upto_layer,
                  double alpha) {
    if (upto_layer > attention.size()) {
        throw ConfigError("rollout_at: layer " + std::to_string(upto_layer) + " beyond the " +
                          std::to_string(attention.size()) + " captured layers");
    }
    const std::size_t n = attention.empty() ? 0 : attention[0].heads.at(0).rows();
    RolloutState state = RolloutState::initial(n, alpha);
    for (std::size_t l = 0; l < upto_layer; ++l) {
        state = accumulate(state, mean_over_heads(attention[l].heads));
    }
    return state.r;
}

std::vector<double> influence_scores(const Matrix& r, std::span<const std::size_t> query_rows) {
    if (query_rows.empty()) {
        throw ConfigError("influence_scores: query row set is empty");
    }
    for (std::size_t row : query_rows) {
        if (row >= r.rows()) {
            throw ConfigError("influence_scores: query row " + std::to_string(row) +
                              " outside matrix with " + std::to_string(r.rows()) + " rows");
        }
    }
    std::vector<double> scores(r.cols(), 0.0);
    const double inv = 1.0 / static_cast<double>(query_rows.size());
    for (std::size_t row : query_rows) {
        auto rr = r.row(row);
        for (std::size_t j = 0; j < scores.size(); ++j) {
            scores[j] += rr[j] * inv;
        }
    }
    return scores;
}

void write_heatmap_csv(const Matrix& r, std::ostream& os) {
    os << r.rows() << "\n";
    char buf[32];
    for (std::size_t i = 0; i < r.rows(); ++i) {
        for (std::size_t j = 0; j < r.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.6g", r(i, j));
            os << buf;
            if (j + 1 < r.cols()) {
                os << ",";
            }
        }
        os << "\n";
    }
}

}  // namespace avprune
