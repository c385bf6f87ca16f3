// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/pruning.hpp"

#include <algorithm>
#include <exception>
#include <cmath>
#include <numeric>
#include <string>

#include "avprune/errors.hpp"
#include "avprune/rollout.hpp"

namespace avprune {

bool PruneConfig::class_protected(Modality m) const {
    return std::find(protected_classes.begin(), protected_classes.end(), m) !=
           protected_classes.end();
}

std::size_t PruneConfig::resolved_middle(std::size_t layers) const {
    return middle_layer == 0 ? layers / 2 : middle_layer;
}

std::size_t PruneConfig::resolved_fine_last(std::size_t layers) const {
    return fine_last_layer == 0 ? layers : fine_last_layer;
}

void PruneConfig::validate(std::size_t layers) const {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("prune config: alpha outside [0, 1]");
    }
    const std::size_t mid = resolved_middle(layers);
    if (mid < 1 || mid > layers) {
        throw ConfigError("prune config: middle layer " + std::to_string(mid) +
                          " outside [1, " + std::to_string(layers) + "]");
    }
    if (fine_ratio < 0.0 || fine_ratio >= 1.0) {
        throw ConfigError("prune config: fine ratio outside [0, 1)");
    }
    if (min_active < 1) {
        throw ConfigError("prune config: min_active must be >= 1");
    }
    const std::size_t last = resolved_fine_last(layers);
    if (last < mid || last > layers) {
        throw ConfigError("prune config: fine_last_layer outside [middle, layers]");
    }
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "random") return Strategy::random;
    if (name == "top_attentive") return Strategy::top_attentive;
    if (name == "low_attentive") return Strategy::low_attentive;
    if (name == "top_informative") return Strategy::top_informative;
    if (name == "low_informative") return Strategy::low_informative;
    throw ConfigError("unknown pruning strategy: " + name);
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::top_attentive: return "top_attentive";
        case Strategy::low_attentive: return "low_attentive";
        case Strategy::top_informative: return "top_informative";
        case Strategy::low_informative: return "low_informative";
    }
    return "?";
}

std::vector<std::size_t> select_for_removal(Strategy strategy, std::span<const double> scores,
                                            std::span<const std::size_t> candidates,
                                            std::size_t count, Rng& rng) {
    if (strategy != Strategy::random && scores.size() != candidates.size()) {
        throw InternalError("select_for_removal: score/candidate length mismatch");
    }
    count = std::min(count, candidates.size());
    if (count == 0) {
        return {};
    }
    if (strategy == Strategy::random) {
        // partial Fisher-Yates over a copy
        std::vector<std::size_t> pool(candidates.begin(), candidates.end());
        std::vector<std::size_t> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    const bool remove_low =
        strategy == Strategy::low_attentive || strategy == Strategy::low_informative;
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return remove_low ? scores[a] < scores[b] : scores[a] > scores[b];
        }
        // on ties remove the later position first, keeping earlier tokens
        return candidates[a] > candidates[b];
    });
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(candidates[order[i]]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

CalibrationResult calibrate_global(std::span<const CalibrationSample> samples,
                                   const PruneConfig& cfg, std::size_t layers) {
    if (samples.empty()) {
        throw ConfigError("calibrate_global: no samples");
    }
    const auto* rule = std::get_if<RolloutThreshold>(&cfg.global_rule);
    if (rule == nullptr) {
        throw ConfigError("calibrate_global: global rule is already a position cutoff");
    }
    const std::size_t mid = cfg.resolved_middle(layers);

    for (std::size_t si = 0; si < samples.size(); ++si) {
        if (samples[si].layers.size() < mid) {
            throw ConfigError("calibrate_global: sample " + std::to_string(si) + " has " +
                              std::to_string(samples[si].layers.size()) +
                              " layers, middle layer is " + std::to_string(mid));
        }
    }

    CalibrationResult result;
    result.tau = rule->tau;
    result.alpha = cfg.alpha;
    result.middle_layer = mid;
    result.per_sample_cutoffs.assign(samples.size(), 0);

    std::vector<double> mins(samples.size()), maxs(samples.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(samples.size()); ++si) {
        try {
            const CalibrationSample& sample = samples[static_cast<std::size_t>(si)];
            Matrix r = rollout_at(sample.layers, mid, cfg.alpha);
            std::vector<std::size_t> rows = sample.query_rows;
            if (rows.empty()) {
                rows.push_back(r.rows() - 1);
            }
            std::vector<double> scores = influence_scores(r, rows);
            double lo = scores[0], hi = scores[0];
            std::size_t max_kept = 0;
            bool any = false;
            for (std::size_t j = 0; j < scores.size(); ++j) {
                lo = std::min(lo, scores[j]);
                hi = std::max(hi, scores[j]);
                if (scores[j] >= rule->tau) {
                    max_kept = j;
                    any = true;
                }
            }
            mins[static_cast<std::size_t>(si)] = lo;
            maxs[static_cast<std::size_t>(si)] = hi;
            result.per_sample_cutoffs[static_cast<std::size_t>(si)] = any ? max_kept + 1 : 0;
        } catch (...) {
#pragma omp critical
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    result.score_min = *std::min_element(mins.begin(), mins.end());
    result.score_max = *std::max_element(maxs.begin(), maxs.end());
    if (rule->tau <= 0.0 || rule->tau >= result.score_max) {
        result.warning = "tau " + std::to_string(rule->tau) + " outside observed score range (" +
                         std::to_string(result.score_min) + ", " +
                         std::to_string(result.score_max) + ")";
    }

    // median over samples, rounded up
    std::vector<std::size_t> sorted = result.per_sample_cutoffs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::size_t cutoff;
    if (n % 2 == 1) {
        cutoff = sorted[n / 2];
    } else {
        cutoff = (sorted[n / 2 - 1] + sorted[n / 2] + 1) / 2;
    }
    result.cutoff = PositionCutoff{cutoff};
    return result;
}

ActiveSet apply_global(const TokenSequence& sequence, PositionCutoff cutoff,
                       const PruneConfig& cfg) {
    const std::size_t k = sequence.size();
    if (cfg.retention.kind == RetentionKind::keep_first_frames &&
        sequence.layout != Layout::frame_interleaved) {
        throw ConfigError("apply_global: keep_first_frames requires a frame-interleaved layout");
    }

    ActiveSet out;
    std::size_t audio_rank = 0;
    for (std::size_t pos = 0; pos < k; ++pos) {
        const Modality mod = sequence.modality_at(pos);
        const bool is_last = pos == k - 1;
        const bool class_prot = cfg.class_protected(mod) || is_last;
        if (class_prot) {
            out.add(pos, /*is_protected=*/true);
            continue;
        }
        bool keep = false;
        bool protect = false;
        switch (mod) {
            case Modality::visual:
                keep = pos < cutoff.position;
                if (cfg.retention.kind == RetentionKind::keep_first_frames) {
                    keep = keep && sequence.frame_of(pos) < cfg.retention.keep;
                }
                break;
            case Modality::audio:
                if (cfg.retention.kind == RetentionKind::keep_first_audio) {
                    // first `keep` audio tokens stay regardless of cutoff and
                    // are exempt from fine pruning
                    keep = audio_rank < cfg.retention.keep;
                    protect = keep;
                } else if (cfg.retention.kind == RetentionKind::keep_first_frames) {
                    keep = pos < cutoff.position && sequence.frame_of(pos) < cfg.retention.keep;
                } else {
                    keep = pos < cutoff.position;
                }
                ++audio_rank;
                break;
            default:
                keep = pos < cutoff.position;
                break;
        }
        if (keep) {
            out.add(pos, protect);
        }
    }

    // min_active backstop: re-admit the earliest removed positions
    if (out.size() < cfg.min_active) {
        ActiveSet padded;
        std::size_t deficit = cfg.min_active - out.size();
        for (std::size_t pos = 0; pos < k; ++pos) {
            if (out.contains(pos)) {
                padded.add(pos, out.is_protected(pos));
            } else if (deficit > 0) {
                padded.add(pos, false);
                --deficit;
            }
        }
        out = std::move(padded);
    }
    return out;
}

ImportanceScores fine_scores(std::span<const double> last_query_row, const ActiveSet& active) {
    if (last_query_row.size() != active.size()) {
        throw InternalError("fine_scores: row length " + std::to_string(last_query_row.size()) +
                            " does not match active set size " + std::to_string(active.size()));
    }
    double sum = 0.0;
    for (double v : last_query_row) {
        if (v < -1e-12) {
            throw InternalError("fine_scores: negative importance score");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw InternalError("fine_scores: scores sum to " + std::to_string(sum) +
                            ", expected 1 within 1e-6");
    }
    ImportanceScores out;
    out.values.assign(last_query_row.begin(), last_query_row.end());
    out.positions = active.positions();
    return out;
}

ActiveSet apply_fine_with_strategy(const ImportanceScores& scores, const ActiveSet& active,
                                   const PruneConfig& cfg, Strategy strategy, Rng& rng) {
    if (scores.positions != active.positions()) {
        throw InternalError("apply_fine: scores not aligned with active set");
    }
    std::vector<std::size_t> candidates;
    std::vector<double> cand_scores;
    for (std::size_t i = 0; i < scores.positions.size(); ++i) {
        if (!active.is_protected(scores.positions[i])) {
            candidates.push_back(scores.positions[i]);
            cand_scores.push_back(scores.values[i]);
        }
    }
    std::size_t count =
        static_cast<std::size_t>(std::floor(cfg.fine_ratio * static_cast<double>(candidates.size())));
    if (active.size() < cfg.min_active + count) {
        count = active.size() > cfg.min_active ? active.size() - cfg.min_active : 0;
    }
    if (count == 0) {
        return active;
    }
    std::vector<std::size_t> removals =
        select_for_removal(strategy, cand_scores, candidates, count, rng);
    return active.without(removals);
}

ActiveSet apply_fine(const ImportanceScores& scores, const ActiveSet& active,
                     const PruneConfig& cfg) {
    Rng rng(0);  // low_attentive never consults it
    return apply_fine_with_strategy(scores, active, cfg, Strategy::low_attentive, rng);
}

TwoStagePruner::TwoStagePruner(const TokenSequence& sequence, const PruneConfig& cfg,
                               std::size_t layers, Strategy fine_strategy,
                               std::uint64_t strategy_seed)
    : sequence_(sequence),
      cfg_(cfg),
      layers_(layers),
      middle_(cfg.resolved_middle(layers)),
      fine_last_(cfg.resolved_fine_last(layers)),
      fine_strategy_(fine_strategy),
      rng_(strategy_seed) {
    cfg_.validate(layers);
}

void TwoStagePruner::set_global_removals(std::vector<std::size_t> positions) {
    std::sort(positions.begin(), positions.end());
    global_plan_ = std::move(positions);
}

ActiveSet TwoStagePruner::protect_only(const ActiveSet& active) const {
    ActiveSet out;
    const std::size_t k = sequence_.size();
    for (std::size_t pos : active.positions()) {
        const bool prot = pos == k - 1 || pos >= k ||
                          cfg_.class_protected(sequence_.modality_at(pos));
        out.add(pos, prot || active.is_protected(pos));
    }
    return out;
}

std::optional<ActiveSet> TwoStagePruner::prefill_after_layer(std::size_t layer,
                                                             const ActiveSet& active,
                                                             std::span<const double> last_query_row) {
    if (layer == middle_) {
        ActiveSet next;
        if (global_plan_.has_value()) {
            ActiveSet marked = protect_only(active);
            std::vector<std::size_t> removable;
            for (std::size_t pos : *global_plan_) {
                if (marked.contains(pos) && !marked.is_protected(pos)) {
                    removable.push_back(pos);
                }
            }
            next = marked.without(removable);
        } else {
            const auto* cut = std::get_if<PositionCutoff>(&cfg_.global_rule);
            if (cut == nullptr) {
                throw ConfigError("two-stage pruner: rollout threshold must be calibrated to a "
                                  "position cutoff before inference");
            }
            next = apply_global(sequence_, *cut, cfg_);
        }
        PruneEvent ev{layer, "global", {}};
        for (std::size_t pos : active.positions()) {
            if (!next.contains(pos)) {
                ev.removed.push_back(pos);
            }
        }
        events_.push_back(std::move(ev));
        return next;
    }
    if (layer > middle_ && layer <= fine_last_) {
        ImportanceScores scores = fine_scores(last_query_row, active);
        ActiveSet next = apply_fine_with_strategy(scores, active, cfg_, fine_strategy_, rng_);
        PruneEvent ev{layer, "fine", {}};
        for (std::size_t pos : active.positions()) {
            if (!next.contains(pos)) {
                ev.removed.push_back(pos);
            }
        }
        events_.push_back(std::move(ev));
        return next;
    }
    return std::nullopt;
}

bool TwoStagePruner::prune_during_generation() const {
    return cfg_.fine_during_generation;
}

std::optional<ActiveSet> TwoStagePruner::generation_after_step(std::size_t layer,
                                                               const ActiveSet& active,
                                                               std::span<const double> last_query_row) {
    if (layer <= middle_ || layer > fine_last_) {
        return std::nullopt;
    }
    ImportanceScores scores = fine_scores(last_query_row, active);
    return apply_fine_with_strategy(scores, active, cfg_, fine_strategy_, rng_);
}

}  // namespace avprune
