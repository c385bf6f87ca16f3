// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line; the binary
// exits nonzero if any criterion fails.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "avprune/flops.hpp"
#include "avprune/harness.hpp"
#include "avprune/model.hpp"
#include "avprune/needle.hpp"
#include "avprune/pruning.hpp"
#include "avprune/reference.hpp"
#include "avprune/rng.hpp"
#include "avprune/rollout.hpp"

using namespace avprune;

namespace {

int failures = 0;

void verdict(int number, const char* description, bool ok, const std::string& detail = "") {
    std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", number, description,
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) {
        ++failures;
    }
}

Matrix random_causal_stochastic(std::size_t n, Rng& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            m(i, j) = rng.unit() + 1e-3;
            sum += m(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) {
            m(i, j) /= sum;
        }
    }
    return m;
}

std::vector<AttentionTensor> random_stack(std::size_t n, std::size_t layers, std::size_t heads,
                                          Rng& rng) {
    std::vector<AttentionTensor> out(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        out[l].layer = l + 1;
        for (std::size_t h = 0; h < heads; ++h) {
            out[l].heads.push_back(random_causal_stochastic(n, rng));
        }
    }
    return out;
}

Matrix brute_force_rollout(const std::vector<AttentionTensor>& stack, std::size_t upto,
                           double alpha) {
    const std::size_t n = stack[0].heads[0].rows();
    Matrix r = Matrix::identity(n);
    for (std::size_t l = 0; l < upto; ++l) {
        Matrix mean(n, n);
        for (const Matrix& head : stack[l].heads) {
            for (std::size_t i = 0; i < mean.data().size(); ++i) {
                mean.data()[i] += head.data()[i];
            }
        }
        for (double& v : mean.data()) {
            v /= static_cast<double>(stack[l].heads.size());
        }
        Matrix mixed(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                mixed(i, j) = alpha * mean(i, j) + (i == j ? 1.0 - alpha : 0.0);
            }
        }
        r = reference::matmul(mixed, r);
    }
    return r;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

// 1. rollout_at against the explicit mixed-matrix product
void criterion_rollout_oracle() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const std::size_t layers = 1 + rng.below(4);
        const std::size_t heads = 1 + rng.below(3);
        auto stack = random_stack(n, layers, heads, rng);
        for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
            worst = std::max(worst, max_abs_diff(rollout_at(stack, layers, alpha),
                                                 brute_force_rollout(stack, layers, alpha)));
        }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                               .count();
    std::ostringstream detail;
    detail << "max |diff| " << worst << ", " << seconds << " s";
    verdict(1, "rollout matches the brute-force product on 50 random stacks (1e-10, <5s)",
            worst <= 1e-10 && seconds < 5.0, detail.str());
}

// 2. alpha limits are exact
void criterion_rollout_limits() {
    Rng rng(1002);
    double worst_zero = 0.0, worst_one = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const std::size_t layers = 1 + rng.below(4);
        auto stack = random_stack(n, layers, 2, rng);

        Matrix at_zero = rollout_at(stack, layers, 0.0);
        worst_zero = std::max(worst_zero, max_abs_diff(at_zero, Matrix::identity(n)));

        Matrix raw = Matrix::identity(n);
        for (std::size_t l = 0; l < layers; ++l) {
            raw = reference::matmul(mean_over_heads(stack[l].heads), raw);
        }
        worst_one = std::max(worst_one, max_abs_diff(rollout_at(stack, layers, 1.0), raw));
    }
    std::ostringstream detail;
    detail << "alpha=0 |diff| " << worst_zero << ", alpha=1 |diff| " << worst_one;
    verdict(2, "alpha=0 gives the identity, alpha=1 the raw attention product (1e-12)",
            worst_zero <= 1e-12 && worst_one <= 1e-12, detail.str());
}

// 3. 28-layer stochasticity endurance
void criterion_stochasticity_endurance() {
    Rng rng(1003);
    auto stack = random_stack(48, 28, 4, rng);
    const double err = max_row_sum_error(rollout_at(stack, 28, 0.5));
    verdict(3, "row sums survive a 28-layer rollout within 1e-9", err <= 1e-9,
            "max row-sum error " + std::to_string(err));
}

// 4. no-op pruning is bit-identical to vanilla decoding
void criterion_noop_equivalence() {
    bool all_equal = true;
    Rng rng(1004);
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg;
        cfg.layers = 8;
        cfg.heads = 4;
        cfg.model_dim = 64;
        cfg.ffn_dim = 128;
        cfg.vocab_size = 128;
        cfg.seed = 2000 + static_cast<std::uint64_t>(trial);
        ModelWeights weights = init_model(cfg);

        const std::size_t visual = 4 + rng.below(30);
        const std::size_t audio = 2 + rng.below(20);
        const std::size_t text = 2 + rng.below(8);  // K <= 64
        TokenSequence seq = gen_sequence({visual, audio, text, Layout::contiguous, 0, 0, 0},
                                         cfg.vocab_size, cfg.seed);

        DecodeOptions opts;
        opts.max_steps = 8;
        DecodeResult vanilla = decode_greedy(weights, seq, opts, nullptr);

        PruneConfig pc;
        pc.fine_ratio = 0.0;
        pc.retention = {RetentionKind::none, 0};
        pc.global_rule = PositionCutoff{seq.size()};
        TwoStagePruner pruner(seq, pc, cfg.layers);
        DecodeResult pruned = decode_greedy(weights, seq, opts, &pruner);

        all_equal = all_equal && vanilla.tokens == pruned.tokens;
    }
    verdict(4, "no-op pruner decodes bit-identically to vanilla on 20 seeded sequences",
            all_equal);
}

// 5. apply_fine against the sort-and-drop oracle
std::vector<std::size_t> oracle_fine(const std::vector<std::size_t>& positions,
                                     const std::vector<double>& values,
                                     const std::vector<bool>& protected_flags, double ratio,
                                     std::size_t min_active) {
    std::vector<std::size_t> active = positions;
    std::vector<double> score = values;
    std::vector<bool> prot = protected_flags;
    std::size_t prunable = 0;
    for (bool f : prot) {
        prunable += f ? 0 : 1;
    }
    std::size_t count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(prunable)));
    if (active.size() < min_active + count) {
        count = active.size() > min_active ? active.size() - min_active : 0;
    }
    for (std::size_t r = 0; r < count; ++r) {
        std::size_t victim = active.size();
        for (std::size_t i = 0; i < active.size(); ++i) {
            if (prot[i]) {
                continue;
            }
            if (victim == active.size() || score[i] < score[victim] ||
                (score[i] == score[victim] && active[i] > active[victim])) {
                victim = i;
            }
        }
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(victim));
        score.erase(score.begin() + static_cast<std::ptrdiff_t>(victim));
        prot.erase(prot.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    return active;
}

void criterion_fine_oracle() {
    Rng rng(1005);
    bool all_match = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(64);
        std::vector<std::size_t> positions;
        std::vector<bool> prot;
        std::size_t pos = rng.below(3);
        for (std::size_t i = 0; i < n; ++i) {
            positions.push_back(pos);
            prot.push_back(rng.below(4) == 0);
            pos += 1 + rng.below(3);
        }
        std::vector<double> values(n);
        double sum = 0.0;
        for (double& v : values) {
            v = static_cast<double>(rng.below(6)) + 1.0;  // coarse grid forces ties
            sum += v;
        }
        for (double& v : values) {
            v /= sum;
        }
        const double ratio = static_cast<double>(rng.below(10)) / 10.0;
        const std::size_t min_active = 1 + rng.below(4);

        ActiveSet active;
        for (std::size_t i = 0; i < n; ++i) {
            active.add(positions[i], prot[i]);
        }
        ImportanceScores scores;
        scores.values = values;
        scores.positions = active.positions();
        PruneConfig cfg;
        cfg.fine_ratio = ratio;
        cfg.min_active = min_active;
        ActiveSet fast = apply_fine(scores, active, cfg);
        all_match = all_match &&
                    fast.positions() == oracle_fine(positions, values, prot, ratio, min_active);
    }
    verdict(5, "fine pruning matches the sort-and-drop oracle on 1000 random instances",
            all_match);
}

// 6. flops normalization and consistency with the published ratios
void criterion_flops() {
    ModelConfig cfg;
    cfg.layers = 28;
    cfg.heads = 1;
    cfg.model_dim = 4096;
    cfg.ffn_dim = 11008;
    cfg.vocab_size = 2;

    LayerSchedule constant;
    constant.tokens_per_layer.assign(28, 2000);
    const double base = schedule_flops(constant, cfg).relative;

    // two-thirds of the multimodal tokens removed at layer 14, P = 20%
    const double a = schedule_flops(two_stage_schedule(2000, 30, 28, 14, 2.0 / 3.0, 0.20),
                                    cfg).relative;
    // just over half removed, P = 20%
    const double b = schedule_flops(two_stage_schedule(2000, 30, 28, 14, 0.55, 0.20),
                                    cfg).relative;

    std::ostringstream detail;
    detail << "vanilla " << base << ", two-thirds " << a << " in [50,62], half " << b
           << " in [52,64]";
    verdict(6, "flops normalize to exactly 100; reference schedules land in [50,62] and [52,64]",
            base == 100.0 && a >= 50.0 && a <= 62.0 && b >= 52.0 && b <= 64.0, detail.str());
}

// 7. the audio retention rule
void criterion_retention() {
    TokenSequence seq = gen_sequence({4, 1496, 8, Layout::contiguous, 0, 0, 0}, 64, 7);
    PruneConfig cfg;
    cfg.retention = {RetentionKind::keep_first_audio, 10};
    ActiveSet out = apply_global(seq, PositionCutoff{seq.size()}, cfg);
    std::size_t audio = 0;
    for (std::size_t pos : out.positions()) {
        audio += seq.modality_at(pos) == Modality::audio ? 1 : 0;
    }
    verdict(7, "keep_first_audio(10) retains exactly 10 of 1496 audio tokens", audio == 10,
            std::to_string(audio) + " retained");
}

// 8. needle preservation under the default two-stage configuration
void criterion_needle_preservation() {
    const int tasks = 100;
    ModelConfig cfg;  // default scaled-down setting: 28 layers, d=128, h=8, m=512
    SequenceRecipe recipe{24, 16, 8, Layout::contiguous, 0, 0, 0};
    const std::size_t k = recipe.total();

    int matches = 0;
    int vanilla_ok = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : matches, vanilla_ok)
    for (int t = 0; t < tasks; ++t) {
        NeedleSetup setup = make_needle_setup(cfg, recipe, 3000 + static_cast<std::uint64_t>(t));
        DecodeOptions opts;
        opts.max_steps = 1;
        DecodeResult vanilla = decode_greedy(setup.weights, setup.task.sequence, opts, nullptr);

        PruneConfig pc;
        pc.middle_layer = 14;
        pc.fine_ratio = 0.20;
        pc.retention = {RetentionKind::keep_first_audio, 10};
        pc.min_active = recipe.text + 1;
        pc.global_rule = PositionCutoff{(k + 2) / 3};
        TwoStagePruner pruner(setup.task.sequence, pc, cfg.layers);
        DecodeResult pruned = decode_greedy(setup.weights, setup.task.sequence, opts, &pruner);

        vanilla_ok += vanilla.tokens[0] == setup.task.expected_answer ? 1 : 0;
        matches += pruned.tokens[0] == vanilla.tokens[0] ? 1 : 0;
    }
    std::ostringstream detail;
    detail << matches << "/100 pruned answers match vanilla (vanilla solves " << vanilla_ok
           << "/100)";
    verdict(8, "pruned decoding preserves the needle answer in >= 95% of 100 tasks",
            matches >= 95, detail.str());
}

// 9. no square attention buffer on the pruned path
void criterion_attention_map_independence() {
    ModelConfig cfg;  // default setting
    cfg.seed = 4001;
    ModelWeights weights = init_model(cfg);
    SequenceRecipe recipe{24, 16, 8, Layout::contiguous, 0, 0, 0};
    TokenSequence seq = gen_sequence(recipe, cfg.vocab_size, 4001);

    PruneConfig pc;
    pc.middle_layer = 14;
    pc.fine_ratio = 0.20;
    pc.retention = {RetentionKind::keep_first_audio, 10};
    pc.min_active = recipe.text + 1;
    pc.global_rule = PositionCutoff{seq.size() / 3};

    AttentionAudit audit;
    DecodeOptions opts;
    opts.max_steps = 8;
    opts.audit = &audit;
    TwoStagePruner pruner(seq, pc, cfg.layers);
    decode_greedy(weights, seq, opts, &pruner);

    std::ostringstream detail;
    detail << audit.row_buffers.load() << " row buffers, " << audit.square_buffers.load()
           << " square, widest " << audit.max_buffer_rows.load() << " row(s)";
    verdict(9, "an instrumented pruned decode allocates no square attention buffer",
            audit.square_buffers.load() == 0 && audit.max_buffer_rows.load() <= 1 &&
                audit.row_buffers.load() > 0,
            detail.str());
}

// 10. byte-identical reports for identical specs
void criterion_determinism() {
    ExperimentSpec spec;
    spec.name = "determinism";
    spec.model.layers = 6;
    spec.model.heads = 4;
    spec.model.model_dim = 32;
    spec.model.ffn_dim = 64;
    spec.model.vocab_size = 64;
    spec.sequence = {10, 6, 4, Layout::contiguous, 0, 0, 0};
    spec.cutoff = 7;
    spec.seed = 5001;
    spec.repetitions = 2;
    spec.out_dir = std::filesystem::temp_directory_path() / "avprune_acceptance_det";
    std::filesystem::remove_all(spec.out_dir);

    auto read = [&] {
        std::ifstream is(spec.out_dir / "report.json");
        std::ostringstream os;
        os << is.rdbuf();
        return os.str();
    };
    run_experiment(spec);
    const std::string first = read();
    run_experiment(spec);
    const std::string second = read();
    std::filesystem::remove_all(spec.out_dir);
    verdict(10, "repeated runs of one spec produce byte-identical JSON reports",
            !first.empty() && first == second);
}

}  // namespace

int main() {
    std::printf("acceptance suite (%d OpenMP threads)\n", omp_get_max_threads());
    criterion_rollout_oracle();
    criterion_rollout_limits();
    criterion_stochasticity_endurance();
    criterion_noop_equivalence();
    criterion_fine_oracle();
    criterion_flops();
    criterion_retention();
    criterion_needle_preservation();
    criterion_attention_map_independence();
    criterion_determinism();
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
