// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "avprune/matrix.hpp"
#include "avprune/model.hpp"

namespace avprune {

// Cumulative rollout up to some layer. R stays row-stochastic: convex
// combinations and products of row-stochastic matrices are row-stochastic,
// so no renormalization happens anywhere in this module.
struct RolloutState {
    double alpha = 0.5;
    std::size_t layer = 0;  // number of layers folded in so far
    Matrix r;

    static RolloutState initial(std::size_t n, double alpha);
};

// alpha * A + (1 - alpha) * I. alpha in [0, 1], A square.
Matrix mix_residual(const Matrix& a, double alpha);

// Folds the next layer's head-averaged attention into the rollout:
// R' = mix_residual(A_next, alpha) * R.
RolloutState accumulate(const RolloutState& state, const Matrix& a_next);

// Head-averages each captured layer and folds layers 1..upto_layer.
// upto_layer == 0 returns the identity.
Matrix rollout_at(std::span<const AttentionTensor> attention, std::size_t upto_layer,
                  double alpha);

// score[j] = mean over i in query_rows of R(i, j). Scores of a stochastic R
// sum to 1.
std::vector<double> influence_scores(const Matrix& r, std::span<const std::size_t> query_rows);

// CSV export for heatmap rendering: first line is the dimension n, then n
// rows of n comma-separated values at 6 significant digits.
void write_heatmap_csv(const Matrix& r, std::ostream& os);

}  // namespace avprune
