// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>

#include "avprune/errors.hpp"
#include "avprune/flops.hpp"

using namespace avprune;

namespace {

ModelConfig config_for(std::size_t layers, std::size_t d, std::size_t m) {
    ModelConfig cfg;
    cfg.layers = layers;
    cfg.heads = 1;
    cfg.model_dim = d;
    cfg.ffn_dim = m;
    cfg.vocab_size = 2;
    return cfg;
}

}  // namespace

TEST_CASE("layer flops formula") {
    CHECK(layer_flops(10, 64, 256) == 504320);
    CHECK(layer_flops(1, 1, 1) == 8);
    CHECK_THROWS_AS(layer_flops(0, 64, 256), ConfigError);
}

TEST_CASE("doubling tokens more than doubles flops") {
    for (std::size_t n : {4u, 32u, 500u}) {
        CHECK(layer_flops(2 * n, 64, 128) > 2 * layer_flops(n, 64, 128));
    }
}

TEST_CASE("constant schedule normalizes to exactly 100") {
    LayerSchedule sched;
    sched.tokens_per_layer.assign(12, 77);
    FlopsReport report = schedule_flops(sched, config_for(12, 96, 384));
    CHECK(report.relative == 100.0);
    CHECK(report.total == report.vanilla_total);
}

TEST_CASE("schedule length must match the layer count") {
    LayerSchedule sched;
    sched.tokens_per_layer.assign(5, 10);
    CHECK_THROWS_AS(schedule_flops(sched, config_for(6, 32, 64)), ConfigError);
}

TEST_CASE("schedule validation") {
    LayerSchedule bad;
    bad.tokens_per_layer = {4, 5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    LayerSchedule zero;
    zero.tokens_per_layer = {4, 0};
    CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("halving the tokens halves the linear terms exactly") {
    const std::size_t d = 4096, m = 11008, k = 512;
    LayerSchedule sched;
    sched.tokens_per_layer = {k, k / 2, k / 2, k / 2};
    FlopsReport report = schedule_flops(sched, config_for(4, d, m));
    std::uint64_t expected = layer_flops(k, d, m) + 3 * layer_flops(k / 2, d, m);
    CHECK(report.total == expected);
    CHECK(report.relative ==
          100.0 * static_cast<double>(expected) / static_cast<double>(4 * layer_flops(k, d, m)));
}

TEST_CASE("pointwise smaller schedules cost strictly less") {
    LayerSchedule big;
    big.tokens_per_layer = {100, 100, 90, 80};
    LayerSchedule small = big;
    small.tokens_per_layer[2] = 85;
    ModelConfig cfg = config_for(4, 128, 512);
    CHECK(schedule_flops(small, cfg).total < schedule_flops(big, cfg).total);
}

TEST_CASE("total equals the per-layer sum exactly") {
    LayerSchedule sched;
    sched.tokens_per_layer = {64, 64, 40, 30, 24, 20};
    FlopsReport report = schedule_flops(sched, config_for(6, 256, 1024));
    std::uint64_t sum = std::accumulate(report.per_layer.begin(), report.per_layer.end(),
                                        std::uint64_t{0});
    CHECK(sum == report.total);
}

TEST_CASE("two-stage schedules at reference scale land in the expected bands") {
    // 7B-class decoder geometry; the bands are deliberately wide because the
    // exact sequence composition varies by model
    const std::size_t k = 2000, text = 30, layers = 28, mid = 14;
    ModelConfig cfg = config_for(layers, 4096, 11008);

    LayerSchedule two_thirds = two_stage_schedule(k, text, layers, mid, 2.0 / 3.0, 0.20);
    FlopsReport a = schedule_flops(two_thirds, cfg);
    CHECK(a.relative >= 50.0);
    CHECK(a.relative <= 62.0);

    LayerSchedule half = two_stage_schedule(k, text, layers, mid, 0.55, 0.20);
    FlopsReport b = schedule_flops(half, cfg);
    CHECK(b.relative >= 52.0);
    CHECK(b.relative <= 64.0);
    CHECK(b.relative > a.relative);
}

TEST_CASE("two-stage schedule arithmetic is the floor recurrence") {
    LayerSchedule sched = two_stage_schedule(100, 10, 6, 3, 0.5, 0.2);
    // multimodal = 90, remove floor(45) -> 55 tokens from layer 4 on
    CHECK(sched.tokens_per_layer == std::vector<std::size_t>{100, 100, 100, 55, 47, 40});
    // prunable at layer 4: 55-11=44 -> remove floor(8.8)=8 -> 47
    // prunable at layer 5: 47-11=36 -> remove floor(7.2)=7 -> 40
}

TEST_CASE("step flops grow linearly with context") {
    CHECK(step_flops(100, 64, 256) + 2 * 50 * 64 == step_flops(150, 64, 256));
}
