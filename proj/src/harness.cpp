// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#include "avprune/harness.hpp"

#include <omp.h>

#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include "avprune/errors.hpp"
#include "avprune/rollout.hpp"
#include "avprune/trace.hpp"

namespace avprune {

namespace {

using nlohmann::json;

std::uint64_t sequence_seed(std::uint64_t seed) { return seed * 1000003ULL + 17ULL; }

std::uint64_t calibration_seed(std::uint64_t base, std::size_t index) {
    return base * 31ULL + 777ULL + static_cast<std::uint64_t>(index);
}

std::vector<std::size_t> query_rows_for(const TokenSequence& seq) {
    std::vector<std::size_t> rows;
    for (std::size_t pos = seq.first_text_position(); pos < seq.size(); ++pos) {
        rows.push_back(pos);
    }
    if (rows.empty()) {
        rows.push_back(seq.size() - 1);
    }
    return rows;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* layout_name(Layout l) {
    return l == Layout::contiguous ? "contiguous" : "frame_interleaved";
}

Layout layout_from_name(const std::string& name) {
    if (name == "contiguous") return Layout::contiguous;
    if (name == "frame_interleaved") return Layout::frame_interleaved;
    throw ConfigError("unknown layout: " + name);
}

const char* retention_name(RetentionKind k) {
    switch (k) {
        case RetentionKind::none: return "none";
        case RetentionKind::keep_first_audio: return "keep_first_audio";
        case RetentionKind::keep_first_frames: return "keep_first_frames";
    }
    return "?";
}

RetentionKind retention_from_name(const std::string& name) {
    if (name == "none") return RetentionKind::none;
    if (name == "keep_first_audio") return RetentionKind::keep_first_audio;
    if (name == "keep_first_frames") return RetentionKind::keep_first_frames;
    throw ConfigError("unknown retention rule: " + name);
}

json flops_to_json(const FlopsReport& r) {
    return json{{"per_layer", r.per_layer},
                {"total", r.total},
                {"vanilla_total", r.vanilla_total},
                {"relative", r.relative},
                {"model_dim", r.model_dim},
                {"ffn_dim", r.ffn_dim},
                {"layers", r.layers},
                {"formula", "4*n*d^2 + 2*n^2*d + 2*n*d*m"},
                {"scope", "decoder layers only, prefill only"}};
}

// Everything a repetition needs: weights, the task sequence, and the needle
// ground truth when the spec asks for one.
struct TaskInstance {
    ModelWeights weights;
    TokenSequence sequence;
    std::optional<NeedleTask> needle;
};

TaskInstance build_task(const ExperimentSpec& spec, std::uint64_t seed) {
    TaskInstance t;
    if (spec.needle) {
        NeedleSetup setup = make_needle_setup(spec.model, spec.sequence, seed, spec.needle_params);
        t.weights = std::move(setup.weights);
        t.sequence = setup.task.sequence;
        t.needle = std::move(setup.task);
    } else {
        ModelConfig cfg = spec.model;
        cfg.seed = seed;
        t.weights = init_model(cfg);
        t.sequence = gen_sequence(spec.sequence, cfg.vocab_size, sequence_seed(seed));
    }
    return t;
}

PruneConfig resolve_prune(const ExperimentSpec& spec, const TokenSequence& seq,
                          std::size_t cutoff) {
    PruneConfig cfg = spec.prune;
    cfg.middle_layer = cfg.resolved_middle(spec.model.layers);
    if (cfg.min_active == 0) {
        cfg.min_active = seq.count(Modality::text) + 1;
    }
    cfg.global_rule = PositionCutoff{cutoff};
    cfg.validate(spec.model.layers);
    return cfg;
}

// Head-averaged last-query attention row at one captured layer.
std::vector<double> last_query_row_at(const AttentionTensor& tensor) {
    const std::size_t n = tensor.heads.at(0).rows();
    std::vector<double> row(n, 0.0);
    const double inv = 1.0 / static_cast<double>(tensor.heads.size());
    for (const Matrix& head : tensor.heads) {
        for (std::size_t j = 0; j < n; ++j) {
            row[j] += head(n - 1, j) * inv;
        }
    }
    return row;
}

// Removal plan for global-stage ablations: same token budget as the
// production rule, tokens selected by the requested strategy. Needs a full
// capture pass, which the production cutoff path does not.
std::vector<std::size_t> global_ablation_plan(const ModelWeights& weights,
                                              const TokenSequence& seq, const PruneConfig& cfg,
                                              Strategy strategy, std::uint64_t seed) {
    const std::size_t k = seq.size();
    const ActiveSet production =
        apply_global(seq, std::get<PositionCutoff>(cfg.global_rule), cfg);
    const std::size_t budget = k - production.size();
    if (budget == 0) {
        return {};
    }
    std::vector<std::size_t> candidates;
    for (std::size_t pos = 0; pos + 1 < k; ++pos) {
        if (!cfg.class_protected(seq.modality_at(pos))) {
            candidates.push_back(pos);
        }
    }
    std::vector<double> scores(candidates.size(), 0.0);
    if (strategy != Strategy::random) {
        CaptureResult capture = forward_capture(weights, seq);
        const std::size_t mid = cfg.resolved_middle(capture.attention.size());
        std::vector<double> per_position;
        if (strategy == Strategy::top_informative || strategy == Strategy::low_informative) {
            Matrix r = rollout_at(capture.attention, mid, cfg.alpha);
            std::vector<std::size_t> rows = query_rows_for(seq);
            per_position = influence_scores(r, rows);
        } else {
            per_position = last_query_row_at(capture.attention[mid - 1]);
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            scores[i] = per_position[candidates[i]];
        }
    }
    Rng rng(seed ^ 0xab1e5eedULL);
    return select_for_removal(strategy, scores, candidates, budget, rng);
}

json events_to_json(const std::vector<PruneEvent>& events) {
    json out = json::array();
    for (const PruneEvent& ev : events) {
        out.push_back(json{{"layer", ev.layer}, {"stage", ev.stage}, {"removed", ev.removed}});
    }
    return out;
}

}  // namespace

void ExperimentSpec::validate() const {
    model.validate();
    if (sequence.total() == 0) {
        throw ConfigError("spec: sequence recipe is empty");
    }
    if (repetitions < 1) {
        throw ConfigError("spec: repetitions must be >= 1");
    }
    if (max_steps < 1) {
        throw ConfigError("spec: max_steps must be >= 1");
    }
    if (calibration_samples < 1) {
        throw ConfigError("spec: calibration_samples must be >= 1");
    }
}

json spec_to_json(const ExperimentSpec& spec) {
    json protected_classes = json::array();
    for (Modality m : spec.prune.protected_classes) {
        protected_classes.push_back(modality_name(m));
    }
    json j{
        {"name", spec.name},
        {"model",
         {{"layers", spec.model.layers},
          {"heads", spec.model.heads},
          {"model_dim", spec.model.model_dim},
          {"ffn_dim", spec.model.ffn_dim},
          {"vocab_size", spec.model.vocab_size}}},
        {"sequence",
         {{"visual", spec.sequence.visual},
          {"audio", spec.sequence.audio},
          {"text", spec.sequence.text},
          {"layout", layout_name(spec.sequence.layout)},
          {"frames", spec.sequence.frames},
          {"visual_per_frame", spec.sequence.visual_per_frame},
          {"audio_per_frame", spec.sequence.audio_per_frame}}},
        {"prune",
         {{"alpha", spec.prune.alpha},
          {"middle_layer", spec.prune.middle_layer},
          {"fine_ratio", spec.prune.fine_ratio},
          {"retention",
           {{"kind", retention_name(spec.prune.retention.kind)},
            {"keep", spec.prune.retention.keep}}},
          {"protected", protected_classes},
          {"min_active", spec.prune.min_active},
          {"fine_last_layer", spec.prune.fine_last_layer},
          {"fine_during_generation", spec.prune.fine_during_generation}}},
        {"run",
         {{"cutoff", spec.cutoff.has_value() ? json(*spec.cutoff) : json("auto")},
          {"tau", spec.tau},
          {"global_strategy", strategy_name(spec.global_strategy)},
          {"fine_strategy", strategy_name(spec.fine_strategy)},
          {"needle", spec.needle},
          {"max_steps", spec.max_steps},
          {"repetitions", spec.repetitions},
          {"seed", spec.seed},
          {"calibration_samples", spec.calibration_samples},
          {"include_generation_flops", spec.include_generation_flops},
          {"emit_heatmaps", spec.emit_heatmaps},
          {"out", spec.out_dir.string()}}},
    };
    if (spec.trace_path.has_value()) {
        j["run"]["trace"] = spec.trace_path->string();
    }
    if (spec.needle) {
        j["needle_params"] = {{"retrieval_layer", spec.needle_params.retrieval_layer},
                              {"marker_scale", spec.needle_params.marker_scale},
                              {"payload_scale", spec.needle_params.payload_scale},
                              {"query_gain", spec.needle_params.query_gain},
                              {"value_gain", spec.needle_params.value_gain},
                              {"region_lo", spec.needle_params.region_lo},
                              {"region_hi", spec.needle_params.region_hi}};
    }
    return j;
}

ExperimentSpec spec_from_json(const json& j) {
    ExperimentSpec spec;
    spec.name = j.value("name", spec.name);
    if (j.contains("model")) {
        const json& m = j["model"];
        spec.model.layers = m.value("layers", spec.model.layers);
        spec.model.heads = m.value("heads", spec.model.heads);
        spec.model.model_dim = m.value("model_dim", spec.model.model_dim);
        spec.model.ffn_dim = m.value("ffn_dim", spec.model.ffn_dim);
        spec.model.vocab_size = m.value("vocab_size", spec.model.vocab_size);
    }
    if (j.contains("sequence")) {
        const json& s = j["sequence"];
        spec.sequence.visual = s.value("visual", spec.sequence.visual);
        spec.sequence.audio = s.value("audio", spec.sequence.audio);
        spec.sequence.text = s.value("text", spec.sequence.text);
        spec.sequence.layout = layout_from_name(s.value("layout", "contiguous"));
        spec.sequence.frames = s.value("frames", spec.sequence.frames);
        spec.sequence.visual_per_frame =
            s.value("visual_per_frame", spec.sequence.visual_per_frame);
        spec.sequence.audio_per_frame = s.value("audio_per_frame", spec.sequence.audio_per_frame);
    }
    if (j.contains("prune")) {
        const json& p = j["prune"];
        spec.prune.alpha = p.value("alpha", spec.prune.alpha);
        spec.prune.middle_layer = p.value("middle_layer", spec.prune.middle_layer);
        spec.prune.fine_ratio = p.value("fine_ratio", spec.prune.fine_ratio);
        if (p.contains("retention")) {
            spec.prune.retention.kind = retention_from_name(p["retention"].value("kind", "none"));
            spec.prune.retention.keep = p["retention"].value("keep", spec.prune.retention.keep);
        }
        if (p.contains("protected")) {
            spec.prune.protected_classes.clear();
            for (const auto& name : p["protected"]) {
                spec.prune.protected_classes.push_back(
                    modality_from_name(name.get<std::string>()));
            }
        }
        spec.prune.min_active = p.value("min_active", spec.prune.min_active);
        spec.prune.fine_last_layer = p.value("fine_last_layer", spec.prune.fine_last_layer);
        spec.prune.fine_during_generation =
            p.value("fine_during_generation", spec.prune.fine_during_generation);
    }
    if (j.contains("run")) {
        const json& r = j["run"];
        if (r.contains("cutoff") && !r["cutoff"].is_string()) {
            spec.cutoff = r["cutoff"].get<std::size_t>();
        }
        spec.tau = r.value("tau", spec.tau);
        spec.global_strategy =
            strategy_from_name(r.value("global_strategy", strategy_name(spec.global_strategy)));
        spec.fine_strategy =
            strategy_from_name(r.value("fine_strategy", strategy_name(spec.fine_strategy)));
        spec.needle = r.value("needle", spec.needle);
        spec.max_steps = r.value("max_steps", spec.max_steps);
        spec.repetitions = r.value("repetitions", spec.repetitions);
        spec.seed = r.value("seed", spec.seed);
        spec.calibration_samples = r.value("calibration_samples", spec.calibration_samples);
        spec.include_generation_flops =
            r.value("include_generation_flops", spec.include_generation_flops);
        spec.emit_heatmaps = r.value("emit_heatmaps", spec.emit_heatmaps);
        if (r.contains("out")) {
            spec.out_dir = r["out"].get<std::string>();
        }
        if (r.contains("trace")) {
            spec.trace_path = std::filesystem::path(r["trace"].get<std::string>());
        }
    }
    if (j.contains("needle_params")) {
        const json& n = j["needle_params"];
        spec.needle_params.retrieval_layer =
            n.value("retrieval_layer", spec.needle_params.retrieval_layer);
        spec.needle_params.marker_scale = n.value("marker_scale", spec.needle_params.marker_scale);
        spec.needle_params.payload_scale =
            n.value("payload_scale", spec.needle_params.payload_scale);
        spec.needle_params.query_gain = n.value("query_gain", spec.needle_params.query_gain);
        spec.needle_params.value_gain = n.value("value_gain", spec.needle_params.value_gain);
        spec.needle_params.region_lo = n.value("region_lo", spec.needle_params.region_lo);
        spec.needle_params.region_hi = n.value("region_hi", spec.needle_params.region_hi);
    }
    return spec;
}

std::string config_hash(const json& config) {
    const std::string dump = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

CalibrationOutcome run_calibration(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<CalibrationSample> samples;
    bool from_trace = false;
    std::size_t sample_n = 0;

    if (spec.trace_path.has_value()) {
        from_trace = true;
        CalibrationSample s;
        s.layers = load_trace(*spec.trace_path);
        sample_n = s.layers[0].heads.at(0).rows();
        s.query_rows = {sample_n - 1};
        samples.push_back(std::move(s));
    } else {
        ModelConfig cfg = spec.model;
        cfg.seed = spec.seed;
        ModelWeights weights = init_model(cfg);
        samples.resize(spec.calibration_samples);
        for (std::size_t i = 0; i < spec.calibration_samples; ++i) {
            TokenSequence seq = gen_sequence(spec.sequence, cfg.vocab_size,
                                             calibration_seed(spec.seed, i));
            CaptureResult capture = forward_capture(weights, seq);
            samples[i].layers = std::move(capture.attention);
            samples[i].query_rows = query_rows_for(seq);
        }
        sample_n = spec.sequence.total();
    }

    const double tau = spec.tau > 0.0 ? spec.tau : 1.0 / static_cast<double>(sample_n);
    PruneConfig cfg = spec.prune;
    cfg.middle_layer = cfg.resolved_middle(spec.model.layers);
    cfg.global_rule = RolloutThreshold{tau};

    CalibrationOutcome outcome;
    outcome.result = calibrate_global(samples, cfg, spec.model.layers);

    json report{
        {"alpha", outcome.result.alpha},
        {"cutoff", outcome.result.cutoff.position},
        {"middle_layer", outcome.result.middle_layer},
        {"per_sample_cutoffs", outcome.result.per_sample_cutoffs},
        {"samples", samples.size()},
        {"corpus", from_trace ? "trace file" : "seeded synthetic sequences"},
        {"aggregate", "median of per-sample cutoffs, rounded up"},
        {"statistic", outcome.result.statistic},
        {"query_rows", from_trace ? "last row" : "first text position onward"},
        {"score_range", {{"min", outcome.result.score_min}, {"max", outcome.result.score_max}}},
        {"tau", outcome.result.tau},
        // Calibration inspects full attention maps; pruned inference never
        // needs them once the cutoff is fixed.
        {"uses_full_attention", true},
    };
    if (outcome.result.warning.has_value()) {
        report["warning"] = *outcome.result.warning;
    }
    outcome.report = std::move(report);
    return outcome;
}

const char* const kSummaryCsvHeader =
    "name,rep,seed,config_hash,global_strategy,fine_strategy,alpha,middle_layer,fine_ratio,"
    "cutoff,relative_flops,outputs_identical,needle_vanilla_ok,needle_pruned_matches,"
    "active_counts";

RunOutcome run_experiment(const ExperimentSpec& spec) {
    spec.validate();

    // The cutoff is an offline, per-experiment constant: calibrate once.
    std::size_t cutoff;
    json calibration_report;
    if (spec.cutoff.has_value()) {
        cutoff = *spec.cutoff;
    } else {
        CalibrationOutcome calibration = run_calibration(spec);
        cutoff = calibration.result.cutoff.position;
        calibration_report = std::move(calibration.report);
    }

    json config = spec_to_json(spec);
    config["resolved"] = {
        {"cutoff", cutoff},
        {"middle_layer", spec.prune.resolved_middle(spec.model.layers)},
        {"fine_last_layer", spec.prune.resolved_fine_last(spec.model.layers)},
    };
    config["notes"] = {
        {"accuracy_proxy",
         "synthetic needle pass rate stands in for benchmark accuracy, which is out of scope"},
        {"influence_statistic",
         "column mean of the middle-layer rollout over query rows (first text position onward); "
         "one of several defensible readings"},
        {"fine_stage", "floor(P * unprotected active) removed per layer from middle+1 through L; "
                       "ties keep the earlier position; prefill only unless "
                       "fine_during_generation"},
        {"protected_in_fine_denominator", false},
        {"capture_mode", "calibration and ablation scoring materialize full attention maps; "
                         "the pruned decode path never does"},
        {"flops", "theoretical, decoder layers only, prefill only"},
    };
    if (!calibration_report.is_null()) {
        config["calibration"] = calibration_report;
    }
    // hash identifies the experiment, not where its files land
    json hashable = config;
    hashable["run"].erase("out");
    const std::string hash = config_hash(hashable);

    RunOutcome outcome;
    json runs = json::array();
    double flops_sum = 0.0;
    std::size_t identical_count = 0;
    std::size_t needle_matches = 0;

    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
        const std::uint64_t seed = spec.seed + rep;
        TaskInstance task = build_task(spec, seed);
        const std::size_t k = task.sequence.size();
        if (cutoff > k) {
            throw ConfigError("run: cutoff " + std::to_string(cutoff) +
                              " beyond sequence length " + std::to_string(k));
        }
        PruneConfig prune_cfg = resolve_prune(spec, task.sequence, cutoff);

        DecodeOptions opts;
        opts.max_steps = spec.max_steps;
        DecodeResult vanilla = decode_greedy(task.weights, task.sequence, opts, nullptr);

        TwoStagePruner pruner(task.sequence, prune_cfg, spec.model.layers, spec.fine_strategy,
                              seed);
        if (spec.global_strategy != Strategy::low_informative) {
            pruner.set_global_removals(global_ablation_plan(
                task.weights, task.sequence, prune_cfg, spec.global_strategy, seed));
        }
        DecodeResult pruned = decode_greedy(task.weights, task.sequence, opts, &pruner);

        LayerSchedule schedule{pruned.layer_token_counts};
        FlopsReport flops = schedule_flops(schedule, spec.model);

        json generation_flops;
        if (spec.include_generation_flops) {
            // context of generation step t at layer l is the layer's cache
            // plus the t generated rows appended so far
            std::uint64_t gen_pruned = 0, gen_vanilla = 0;
            for (std::size_t t = 1; t < pruned.tokens.size(); ++t) {
                for (std::size_t c : pruned.layer_token_counts) {
                    gen_pruned += step_flops(c + t, spec.model.model_dim, spec.model.ffn_dim);
                }
            }
            for (std::size_t t = 1; t < vanilla.tokens.size(); ++t) {
                gen_vanilla += spec.model.layers *
                               step_flops(k + t, spec.model.model_dim, spec.model.ffn_dim);
            }
            generation_flops = {{"pruned_total", gen_pruned},
                                {"vanilla_total", gen_vanilla},
                                {"relative", gen_vanilla == 0
                                                 ? 100.0
                                                 : 100.0 * static_cast<double>(gen_pruned) /
                                                       static_cast<double>(gen_vanilla)}};
        }

        const bool identical = vanilla.tokens == pruned.tokens;
        identical_count += identical ? 1 : 0;
        flops_sum += flops.relative;

        json run{
            {"seed", seed},
            {"vanilla", {{"generated", vanilla.tokens}}},
            {"pruned",
             {{"generated", pruned.tokens},
              {"active_counts", pruned.layer_token_counts},
              {"final_active", pruned.final_active.size()},
              {"events", events_to_json(pruner.events())}}},
            {"flops", flops_to_json(flops)},
            {"outputs_identical", identical},
        };
        if (!generation_flops.is_null()) {
            run["flops"]["generation"] = generation_flops;
        }
        if (task.needle.has_value()) {
            const bool vanilla_ok = vanilla.tokens[0] == task.needle->expected_answer;
            const bool matches = pruned.tokens[0] == vanilla.tokens[0];
            needle_matches += matches ? 1 : 0;
            run["needle"] = {{"expected", task.needle->expected_answer},
                             {"position", task.needle->needle_position},
                             {"vanilla_answer", vanilla.tokens[0]},
                             {"pruned_answer", pruned.tokens[0]},
                             {"vanilla_ok", vanilla_ok},
                             {"pruned_matches_vanilla", matches}};
            run["needle_retained"] =
                pruned.final_active.contains(task.needle->needle_position);
        } else {
            run["needle"] = nullptr;
        }
        runs.push_back(run);

        std::ostringstream row;
        row << spec.name << "," << rep << "," << seed << "," << hash << ","
            << strategy_name(spec.global_strategy) << "," << strategy_name(spec.fine_strategy)
            << "," << format_double(spec.prune.alpha) << ","
            << prune_cfg.resolved_middle(spec.model.layers) << ","
            << format_double(spec.prune.fine_ratio) << "," << cutoff << ","
            << format_double(flops.relative) << "," << (identical ? 1 : 0) << ",";
        if (task.needle.has_value()) {
            row << (vanilla.tokens[0] == task.needle->expected_answer ? 1 : 0) << ","
                << (pruned.tokens[0] == vanilla.tokens[0] ? 1 : 0) << ",";
        } else {
            row << ",,";
        }
        for (std::size_t l = 0; l < pruned.layer_token_counts.size(); ++l) {
            row << pruned.layer_token_counts[l]
                << (l + 1 < pruned.layer_token_counts.size() ? ";" : "");
        }
        outcome.csv_rows.push_back(row.str());
    }

    json aggregate{
        {"repetitions", spec.repetitions},
        {"mean_relative_flops", flops_sum / static_cast<double>(spec.repetitions)},
        {"outputs_identical_rate",
         static_cast<double>(identical_count) / static_cast<double>(spec.repetitions)},
    };
    if (spec.needle) {
        aggregate["needle_pass_rate"] =
            static_cast<double>(needle_matches) / static_cast<double>(spec.repetitions);
    }

    outcome.report = json{{"config", std::move(config)},
                          {"config_hash", hash},
                          {"aggregate", std::move(aggregate)},
                          {"runs", std::move(runs)}};

    if (!spec.out_dir.empty()) {
        std::filesystem::create_directories(spec.out_dir);
        {
            std::ofstream os(spec.out_dir / "report.json", std::ios::trunc);
            os << outcome.report.dump(2) << "\n";
        }
        {
            std::ofstream os(spec.out_dir / "summary.csv", std::ios::trunc);
            os << kSummaryCsvHeader << "\n";
            for (const std::string& row : outcome.csv_rows) {
                os << row << "\n";
            }
        }
        if (spec.emit_heatmaps) {
            export_heatmaps(spec, spec.prune.resolved_middle(spec.model.layers), spec.out_dir);
        }
    }
    return outcome;
}

std::vector<RunOutcome> run_sweep(const std::vector<ExperimentSpec>& specs, std::size_t workers,
                                  const std::filesystem::path& out_dir) {
    std::vector<RunOutcome> outcomes(specs.size());
    std::vector<std::exception_ptr> errors(specs.size());
    const int threads = workers == 0 ? omp_get_max_threads()
                                     : static_cast<int>(std::min<std::size_t>(workers, 64));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(specs.size()); ++i) {
        try {
            outcomes[static_cast<std::size_t>(i)] =
                run_experiment(specs[static_cast<std::size_t>(i)]);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& err : errors) {
        if (err) {
            std::rethrow_exception(err);
        }
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream os(out_dir / "sweep_summary.csv", std::ios::trunc);
        os << kSummaryCsvHeader << "\n";
        for (const RunOutcome& oc : outcomes) {
            for (const std::string& row : oc.csv_rows) {
                os << row << "\n";
            }
        }
    }
    return outcomes;
}

Matrix export_heatmaps(const ExperimentSpec& spec, std::size_t layer,
                       const std::filesystem::path& out_dir) {
    TaskInstance task = build_task(spec, spec.seed);
    CaptureResult capture = forward_capture(task.weights, task.sequence);
    if (layer < 1 || layer > capture.attention.size()) {
        throw ConfigError("heatmap: layer " + std::to_string(layer) + " outside [1, " +
                          std::to_string(capture.attention.size()) + "]");
    }
    Matrix rollout = rollout_at(capture.attention, layer, spec.prune.alpha);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(out_dir / ("rollout_layer" + std::to_string(layer) + ".csv"),
                         std::ios::trunc);
        write_heatmap_csv(rollout, os);
    }
    {
        Matrix raw = mean_over_heads(capture.attention[layer - 1].heads);
        std::ofstream os(out_dir / ("attention_layer" + std::to_string(layer) + ".csv"),
                         std::ios::trunc);
        write_heatmap_csv(raw, os);
    }
    return rollout;
}

void dump_trace(const ExperimentSpec& spec, const std::filesystem::path& path) {
    TaskInstance task = build_task(spec, spec.seed);
    CaptureResult capture = forward_capture(task.weights, task.sequence);
    save_trace(path, capture.attention);
}

}  // namespace avprune
