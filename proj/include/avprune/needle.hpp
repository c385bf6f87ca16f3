// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "avprune/model.hpp"
#include "avprune/sequence.hpp"

namespace avprune {

// Synthetic retrieval probe: one early "needle" token carries a payload id,
// and a planted attention head makes the first generated token equal that id.
// Pruning that keeps the needle must keep the answer; pruning that drops it
// usually breaks it. Stands in for benchmark accuracy at desk scale.
//
// Construction: the question token (last prompt token) and the payload ids
// get marker directions added to their embeddings; one head at the retrieval
// layer is rewired so the question's query aligns with payload keys only, and
// its value path copies the payload identity (a head_dim-dimensional
// subspace) into the residual stream, where the tied unembedding reads it.

struct NeedleParams {
    std::size_t retrieval_layer = 0;  // 0 = middle layer + 1
    double marker_scale = 8.0;        // embedding marker magnitude
    double payload_scale = 4.0;       // payload identity coefficient
    double query_gain = 1.5;          // planted query/key column gain
    double value_gain = 16.0;         // value -> residual copy gain
    // Absolute position window the needle lands in; hi = 0 means K / 3.
    std::size_t region_lo = 1;
    std::size_t region_hi = 0;
};

struct NeedleTask {
    TokenSequence sequence;
    TokenId expected_answer = 0;
    std::size_t needle_position = 0;
};

struct NeedleSetup {
    ModelWeights weights;
    NeedleTask task;
};

// Builds the seeded model, plants the retrieval head, and generates the task
// sequence. Requires heads >= 2, at least one text token (the question), and
// vocab_size >= head_dim + 2.
NeedleSetup make_needle_setup(const ModelConfig& config, const SequenceRecipe& recipe,
                              std::uint64_t seed, const NeedleParams& params = {});

}  // namespace avprune
