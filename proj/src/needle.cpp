// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/needle.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "avprune/errors.hpp"
#include "avprune/rng.hpp"

namespace avprune {

namespace {

// Orthonormal basis of `count` vectors in R^dim via Gram-Schmidt over seeded
// uniform draws. Pure arithmetic, platform-stable.
std::vector<std::vector<double>> orthonormal_directions(std::size_t count, std::size_t dim,
                                                        Rng& rng) {
    if (count > dim) {
        throw ConfigError("needle: cannot fit " + std::to_string(count) +
                          " orthogonal directions in dimension " + std::to_string(dim));
    }
    std::vector<std::vector<double>> basis;
    basis.reserve(count);
    while (basis.size() < count) {
        std::vector<double> v(dim);
        for (double& x : v) {
            x = rng.symmetric(1.0);
        }
        for (const auto& u : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dot += v[i] * u[i];
            }
            for (std::size_t i = 0; i < dim; ++i) {
                v[i] -= dot * u[i];
            }
        }
        double norm = 0.0;
        for (double x : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-6) {
            continue;  // degenerate draw, retry
        }
        for (double& x : v) {
            x /= norm;
        }
        basis.push_back(std::move(v));
    }
    return basis;
}

}  // namespace

NeedleSetup make_needle_setup(const ModelConfig& config, const SequenceRecipe& recipe,
                              std::uint64_t seed, const NeedleParams& params) {
    config.validate();
    if (config.heads < 2) {
        throw ConfigError("needle: needs at least 2 heads (one is rewired)");
    }
    if (recipe.text < 1) {
        throw InputError("needle: recipe needs at least one text token for the question");
    }
    const std::size_t p = config.head_dim();
    if (config.vocab_size < p + 2) {
        throw ConfigError("needle: vocab too small for " + std::to_string(p) + " payload ids");
    }

    const TokenId query_token = static_cast<TokenId>(config.vocab_size - 1);
    const std::size_t payload_lo = config.vocab_size - 1 - p;
    const std::size_t haystack_hi = payload_lo;  // haystack ids stay below the payload block

    ModelConfig cfg = config;
    cfg.seed = seed;
    ModelWeights weights = init_model(cfg);

    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    auto dirs = orthonormal_directions(p + 2, config.model_dim, rng);
    const auto& query_dir = dirs[0];
    const auto& payload_dir = dirs[1];

    // marker + identity components in the embedding table
    for (std::size_t i = 0; i < config.model_dim; ++i) {
        weights.embedding(static_cast<std::size_t>(query_token), i) +=
            params.marker_scale * query_dir[i];
    }
    for (std::size_t t = 0; t < p; ++t) {
        for (std::size_t i = 0; i < config.model_dim; ++i) {
            weights.embedding(payload_lo + t, i) +=
                params.marker_scale * payload_dir[i] + params.payload_scale * dirs[2 + t][i];
        }
    }

    // rewire head 0 of the retrieval layer
    const std::size_t mid = cfg.middle_layer();
    const std::size_t retrieval =
        params.retrieval_layer == 0 ? mid + 1 : params.retrieval_layer;
    if (retrieval < 1 || retrieval > cfg.layers) {
        throw ConfigError("needle: retrieval layer " + std::to_string(retrieval) +
                          " outside [1, " + std::to_string(cfg.layers) + "]");
    }
    LayerWeights& lw = weights.layers[retrieval - 1];
    for (std::size_t r = 0; r < config.model_dim; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
            lw.wq(r, c) = c == 0 ? params.query_gain * query_dir[r] : 0.0;
            lw.wk(r, c) = c == 0 ? params.query_gain * payload_dir[r] : 0.0;
            lw.wv(r, c) = dirs[2 + c][r];
        }
    }
    for (std::size_t c = 0; c < p; ++c) {
        for (std::size_t j = 0; j < config.model_dim; ++j) {
            lw.wo(c, j) = params.value_gain * dirs[2 + c][j];
        }
    }

    // task sequence: haystack ids, question token last, one payload needle
    TokenSequence seq = gen_sequence(recipe, haystack_hi, seed * 1000003ULL + 17ULL);
    const std::size_t k = seq.size();
    seq.tokens[k - 1] = query_token;

    std::size_t hi = params.region_hi == 0 ? k / 3 : params.region_hi;
    std::vector<std::size_t> slots;
    for (std::size_t pos = params.region_lo; pos < hi && pos < k; ++pos) {
        if (seq.modality_at(pos) == Modality::visual) {
            slots.push_back(pos);
        }
    }
    if (slots.empty()) {
        throw InputError("needle: no visual position in [" + std::to_string(params.region_lo) +
                         ", " + std::to_string(hi) + ")");
    }
    const std::size_t needle_pos = slots[rng.below(slots.size())];
    if (needle_pos >= k) {
        throw InputError("needle: position beyond the sequence");
    }
    const TokenId needle_token = static_cast<TokenId>(payload_lo + rng.below(p));
    seq.tokens[needle_pos] = needle_token;

    NeedleSetup setup;
    setup.weights = std::move(weights);
    setup.task = {std::move(seq), needle_token, needle_pos};
    return setup;
}

}  // namespace avprune
