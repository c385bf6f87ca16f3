// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "avprune/active_set.hpp"
#include "avprune/model.hpp"
#include "avprune/rng.hpp"
#include "avprune/sequence.hpp"

namespace avprune {

// Global pruning at inference is a plain position cutoff: multimodal tokens
// at positions >= position are dropped. A rollout threshold has to be turned
// into a cutoff by calibration before any pruned decode.
struct PositionCutoff {
    std::size_t position = 0;
};

struct RolloutThreshold {
    double tau = 0.0;
};

using GlobalRule = std::variant<PositionCutoff, RolloutThreshold>;

enum class RetentionKind { none, keep_first_audio, keep_first_frames };

struct Retention {
    RetentionKind kind = RetentionKind::none;
    std::size_t keep = 0;
};

struct PruneConfig {
    double alpha = 0.5;
    std::size_t middle_layer = 0;  // 0 = layers/2, resolved by validate()
    GlobalRule global_rule = PositionCutoff{};
    Retention retention;
    double fine_ratio = 0.20;
    std::vector<Modality> protected_classes = {Modality::text, Modality::generated};
    std::size_t min_active = 1;
    // 0 = fine pruning runs at every layer after middle_layer.
    std::size_t fine_last_layer = 0;
    bool fine_during_generation = false;

    bool class_protected(Modality m) const;
    std::size_t resolved_middle(std::size_t layers) const;
    std::size_t resolved_fine_last(std::size_t layers) const;
    void validate(std::size_t layers) const;
};

// Normalized last-query importance over the active tokens of one layer.
struct ImportanceScores {
    std::vector<double> values;          // sums to 1
    std::vector<std::size_t> positions;  // aligned original positions
};

enum class Strategy {
    random,
    top_attentive,
    low_attentive,
    top_informative,
    low_informative,
};

Strategy strategy_from_name(const std::string& name);
const char* strategy_name(Strategy s);

// Picks `count` positions to remove from candidates. low_* removes the
// smallest scores, top_* the largest; score ties are broken by removing the
// later position first, so earlier tokens survive. random ignores scores and
// draws without replacement from `rng`.
std::vector<std::size_t> select_for_removal(Strategy strategy, std::span<const double> scores,
                                            std::span<const std::size_t> candidates,
                                            std::size_t count, Rng& rng);

// --- calibration -----------------------------------------------------------

struct CalibrationSample {
    std::vector<AttentionTensor> layers;
    // Rows of the rollout matrix whose column means form the influence
    // statistic; empty means "last row only".
    std::vector<std::size_t> query_rows;
};

struct CalibrationResult {
    PositionCutoff cutoff;
    std::vector<std::size_t> per_sample_cutoffs;
    double tau = 0.0;
    double alpha = 0.5;
    std::size_t middle_layer = 0;
    double score_min = 0.0;
    double score_max = 0.0;
    std::optional<std::string> warning;
    // Which statistic was thresholded; every report echoes this because the
    // choice is ours, not a published one.
    std::string statistic = "column_mean_of_rollout_over_query_rows";
};

// Offline: rollout each sample to the middle layer, threshold the influence
// scores at tau, take the furthest kept position per sample, and aggregate
// with the median (rounded up). The resulting cutoff plus the retention rule
// fully determines global pruning at inference; no attention maps needed.
CalibrationResult calibrate_global(std::span<const CalibrationSample> samples,
                                   const PruneConfig& cfg, std::size_t layers);

// --- apply path -------------------------------------------------------------

// Drops visual/audio tokens at positions >= cutoff, then applies the
// retention rule. keep_first_audio keeps exactly the first `keep` audio
// tokens regardless of cutoff (and protects them from fine pruning);
// keep_first_frames drops multimodal tokens of frames >= keep. Text,
// generated and the last token are never removed.
ActiveSet apply_global(const TokenSequence& sequence, PositionCutoff cutoff,
                       const PruneConfig& cfg);

// Validates normalization of a head-averaged last-query row and attaches the
// active positions. A seam for plugging in alternative scoring strategies.
ImportanceScores fine_scores(std::span<const double> last_query_row, const ActiveSet& active);

// Removes floor(fine_ratio * n_prunable) lowest-scoring unprotected tokens;
// never drops the set below min_active.
ActiveSet apply_fine(const ImportanceScores& scores, const ActiveSet& active,
                     const PruneConfig& cfg);

// Ablation variant with an explicit selection strategy.
ActiveSet apply_fine_with_strategy(const ImportanceScores& scores, const ActiveSet& active,
                                   const PruneConfig& cfg, Strategy strategy, Rng& rng);

// --- pipeline ----------------------------------------------------------------

struct PruneEvent {
    std::size_t layer = 0;
    std::string stage;  // "global" or "fine"
    std::vector<std::size_t> removed;
};

// The two-stage pipeline as decoding hooks: global pruning exactly once at
// the middle layer of the prefill pass, fine pruning at every subsequent
// layer (and optionally per generation step).
class TwoStagePruner : public PruningHooks {
public:
    TwoStagePruner(const TokenSequence& sequence, const PruneConfig& cfg, std::size_t layers,
                   Strategy fine_strategy = Strategy::low_attentive,
                   std::uint64_t strategy_seed = 0);

    // Replaces the cutoff+retention global stage with an explicit removal
    // plan (strategy ablations). Protected positions in the plan are skipped.
    void set_global_removals(std::vector<std::size_t> positions);

    std::optional<ActiveSet> prefill_after_layer(std::size_t layer, const ActiveSet& active,
                                                 std::span<const double> last_query_row) override;
    bool prune_during_generation() const override;
    std::optional<ActiveSet> generation_after_step(std::size_t layer, const ActiveSet& active,
                                                   std::span<const double> last_query_row) override;

    const std::vector<PruneEvent>& events() const { return events_; }

private:
    const TokenSequence& sequence_;
    PruneConfig cfg_;
    std::size_t layers_;
    std::size_t middle_;
    std::size_t fine_last_;
    Strategy fine_strategy_;
    Rng rng_;
    std::optional<std::vector<std::size_t>> global_plan_;
    std::vector<PruneEvent> events_;

    ActiveSet protect_only(const ActiveSet& active) const;
};

}  // namespace avprune
