// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avprune/flops.hpp"
#include "avprune/model.hpp"
#include "avprune/needle.hpp"
#include "avprune/pruning.hpp"
#include "avprune/sequence.hpp"

namespace avprune {

// Fully describes one experiment: model, synthetic sequence recipe, pruning
// configuration and run parameters. Reports are a pure function of the spec,
// so a repeated run writes byte-identical files.
struct ExperimentSpec {
    std::string name = "run";
    ModelConfig model;  // defaults mirror the scaled-down reference setting
    SequenceRecipe sequence{24, 16, 8, Layout::contiguous, 0, 0, 0};
    PruneConfig prune;

    // Explicit position cutoff; nullopt means calibrate ("auto").
    std::optional<std::size_t> cutoff;
    double tau = 0.0;  // rollout threshold for calibration; 0 = 1/K

    Strategy global_strategy = Strategy::low_informative;
    Strategy fine_strategy = Strategy::low_attentive;

    bool needle = false;
    NeedleParams needle_params;

    std::size_t max_steps = 8;
    std::size_t repetitions = 1;
    std::uint64_t seed = 0;
    std::size_t calibration_samples = 100;
    // FLOPs are prefill-only by default; this adds a per-step generation
    // section to each run's flops report.
    bool include_generation_flops = false;
    std::optional<std::filesystem::path> trace_path;  // calibrate from a dump
    std::filesystem::path out_dir;                    // empty = no files
    bool emit_heatmaps = false;

    ExperimentSpec() {
        prune.retention = {RetentionKind::keep_first_audio, 10};
        prune.min_active = 0;  // auto: text count + 1
    }

    void validate() const;
};

nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& j);

// FNV-1a over the canonical JSON dump of the resolved config.
std::string config_hash(const nlohmann::json& config);

struct CalibrationOutcome {
    CalibrationResult result;
    nlohmann::json report;
};

// Runs attention capture over seeded synthetic samples (or a loaded trace)
// and thresholds rollout influence into a position cutoff. This is the one
// path that materializes full attention maps; the report says so.
CalibrationOutcome run_calibration(const ExperimentSpec& spec);

struct RunOutcome {
    nlohmann::json report;
    std::vector<std::string> csv_rows;  // one per repetition, no header
};

extern const char* const kSummaryCsvHeader;

// Executes vanilla and pruned decodes for every repetition, computes the
// FLOPs report from the realized layer schedule, evaluates the needle task
// when present, and writes report.json / summary.csv (+ optional heatmap
// CSVs) under spec.out_dir.
RunOutcome run_experiment(const ExperimentSpec& spec);

// Independent specs executed in parallel (`workers` threads, 0 = hardware);
// writes <out_dir>/sweep_summary.csv when out_dir is set.
std::vector<RunOutcome> run_sweep(const std::vector<ExperimentSpec>& specs, std::size_t workers,
                                  const std::filesystem::path& out_dir);

// Capture + rollout heatmap export for one seeded sequence. Writes
// rollout_layer<l>.csv and attention_layer<l>.csv (raw head-mean) and
// returns the rollout matrix.
Matrix export_heatmaps(const ExperimentSpec& spec, std::size_t layer,
                       const std::filesystem::path& out_dir);

// Capture on the spec's sequence written as an AVTRACE1 file.
void dump_trace(const ExperimentSpec& spec, const std::filesystem::path& path);

}  // namespace avprune
