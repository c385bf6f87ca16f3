// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "avprune/model.hpp"

namespace avprune {

// Active token count per decoder layer during prefill.
struct LayerSchedule {
    std::vector<std::size_t> tokens_per_layer;

    // non-increasing, every entry >= 1; throws ConfigError
    void validate() const;
};

// Theoretical FLOPs of one decoder layer processing n tokens:
//   4*n*d^2  (q/k/v/o projections)
// + 2*n^2*d  (attention scores and value mixing)
// + 2*n*d*m  (feed-forward)
// Exact integer arithmetic, no rounding.
std::uint64_t layer_flops(std::size_t n, std::size_t d, std::size_t m);

// One generation step with context length c (the flagged per-step path).
std::uint64_t step_flops(std::size_t context, std::size_t d, std::size_t m);

struct FlopsReport {
    std::vector<std::uint64_t> per_layer;
    std::uint64_t total = 0;
    std::uint64_t vanilla_total = 0;
    double relative = 0.0;  // 100 * total / vanilla_total
    std::size_t model_dim = 0;
    std::size_t ffn_dim = 0;
    std::size_t layers = 0;
};

// Sums layer_flops over the schedule; `relative` is normalized against the
// constant-K schedule (the unpruned run scores exactly 100). Counts decoder
// layers only, prefill only.
FlopsReport schedule_flops(const LayerSchedule& schedule, const ModelConfig& cfg);

// Builds the idealized two-stage schedule arithmetically: constant K through
// the middle layer, then a one-shot removal of remove_frac of the K - text
// multimodal tokens, then floor(fine_ratio * (n - text - 1)) more per layer.
LayerSchedule two_stage_schedule(std::size_t total_tokens, std::size_t text_tokens,
                                 std::size_t layers, std::size_t middle_layer,
                                 double remove_frac, double fine_ratio);

}  // namespace avprune
