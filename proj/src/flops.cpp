// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/flops.hpp"

#include <cmath>
#include <string>

#include "avprune/errors.hpp"

namespace avprune {

void LayerSchedule::validate() const {
    for (std::size_t l = 0; l < tokens_per_layer.size(); ++l) {
        if (tokens_per_layer[l] < 1) {
            throw ConfigError("layer schedule: zero tokens at layer " + std::to_string(l + 1));
        }
        if (l > 0 && tokens_per_layer[l] > tokens_per_layer[l - 1]) {
            throw ConfigError("layer schedule: token count increases at layer " +
                              std::to_string(l + 1));
        }
    }
}

std::uint64_t layer_flops(std::size_t n, std::size_t d, std::size_t m) {
    if (n == 0 || d == 0 || m == 0) {
        throw ConfigError("layer_flops: dimensions must be positive");
    }
    const std::uint64_t un = n, ud = d, um = m;
    return 4 * un * ud * ud + 2 * un * un * ud + 2 * un * ud * um;
}

std::uint64_t step_flops(std::size_t context, std::size_t d, std::size_t m) {
    if (d == 0 || m == 0) {
        throw ConfigError("step_flops: dimensions must be positive");
    }
    const std::uint64_t uc = context, ud = d, um = m;
    return 4 * ud * ud + 2 * uc * ud + 2 * ud * um;
}

FlopsReport schedule_flops(const LayerSchedule& schedule, const ModelConfig& cfg) {
    if (schedule.tokens_per_layer.size() != cfg.layers) {
        throw ConfigError("schedule_flops: schedule covers " +
                          std::to_string(schedule.tokens_per_layer.size()) + " layers, model has " +
                          std::to_string(cfg.layers));
    }
    schedule.validate();

    FlopsReport report;
    report.model_dim = cfg.model_dim;
    report.ffn_dim = cfg.ffn_dim;
    report.layers = cfg.layers;
    report.per_layer.reserve(cfg.layers);

    const std::size_t k = schedule.tokens_per_layer.front();
    const std::uint64_t vanilla_layer = layer_flops(k, cfg.model_dim, cfg.ffn_dim);
    report.vanilla_total = vanilla_layer * cfg.layers;

    for (std::size_t n : schedule.tokens_per_layer) {
        const std::uint64_t f = layer_flops(n, cfg.model_dim, cfg.ffn_dim);
        report.per_layer.push_back(f);
        report.total += f;
    }
    report.relative =
        100.0 * static_cast<double>(report.total) / static_cast<double>(report.vanilla_total);
    return report;
}

LayerSchedule two_stage_schedule(std::size_t total_tokens, std::size_t text_tokens,
                                 std::size_t layers, std::size_t middle_layer,
                                 double remove_frac, double fine_ratio) {
    if (middle_layer < 1 || middle_layer > layers || text_tokens >= total_tokens) {
        throw ConfigError("two_stage_schedule: inconsistent parameters");
    }
    LayerSchedule sched;
    sched.tokens_per_layer.assign(layers, total_tokens);
    const std::size_t multimodal = total_tokens - text_tokens;
    const std::size_t removed =
        static_cast<std::size_t>(std::floor(remove_frac * static_cast<double>(multimodal)));
    std::size_t n = total_tokens - removed;
    for (std::size_t l = middle_layer; l < layers; ++l) {
        sched.tokens_per_layer[l] = n;
        const std::size_t prunable = n > text_tokens + 1 ? n - text_tokens - 1 : 0;
        const std::size_t fine =
            static_cast<std::size_t>(std::floor(fine_ratio * static_cast<double>(prunable)));
        n -= fine;
    }
    sched.validate();
    return sched;
}

}  // namespace avprune
