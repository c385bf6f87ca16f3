// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver for the two-stage token pruning engine.
//
//   avprune calibrate   derive a position cutoff from rollout analysis
//   avprune run         vanilla vs pruned decode with reports
//   avprune sweep       run a config-driven experiment matrix
//   avprune trace-dump  capture attention into an AVTRACE1 file
//   avprune heatmap     export rollout / raw attention CSV heatmaps

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "avprune/errors.hpp"
#include "avprune/harness.hpp"

namespace {

using avprune::ExperimentSpec;
using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<std::size_t> middle_layer;
    std::optional<double> fine_ratio;
    std::optional<std::string> strategy;
    std::optional<std::string> cutoff;
    std::optional<std::string> trace;
    std::optional<std::string> out;
    std::size_t workers = 0;
    std::optional<std::size_t> layer;  // heatmap only
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--seed", args.seed, "base seed (fallback: AVPRUNE_SEED, then config)");
    cmd->add_option("--alpha", args.alpha, "rollout residual mixing coefficient");
    cmd->add_option("--middle-layer", args.middle_layer, "global pruning layer (0 = layers/2)");
    cmd->add_option("--fine-ratio", args.fine_ratio, "per-layer fine pruning ratio P");
    cmd->add_option("--strategy", args.strategy,
                    "global-stage selection strategy (random, top_attentive, low_attentive, "
                    "top_informative, low_informative)");
    cmd->add_option("--cutoff", args.cutoff, "global position cutoff (number or 'auto')");
    cmd->add_option("--trace", args.trace, "AVTRACE1 file to calibrate from");
    cmd->add_option("--out", args.out, "output directory (or file for trace-dump)");
    cmd->add_option("--workers", args.workers, "parallel workers for sweeps (0 = hardware)");
}

ExperimentSpec build_spec(const CommonArgs& args) {
    ExperimentSpec spec;
    bool config_has_seed = false;
    if (!args.config_path.empty()) {
        std::ifstream is(args.config_path);
        if (!is) {
            throw avprune::InputError("cannot open config file " + args.config_path);
        }
        json j = json::parse(is);
        config_has_seed = j.contains("run") && j["run"].contains("seed");
        spec = avprune::spec_from_json(j);
    }
    if (args.seed.has_value()) {
        spec.seed = *args.seed;
    } else if (!config_has_seed) {
        if (const char* env = std::getenv("AVPRUNE_SEED")) {
            spec.seed = std::strtoull(env, nullptr, 10);
        }
    }
    if (args.alpha.has_value()) {
        spec.prune.alpha = *args.alpha;
    }
    if (args.middle_layer.has_value()) {
        spec.prune.middle_layer = *args.middle_layer;
    }
    if (args.fine_ratio.has_value()) {
        spec.prune.fine_ratio = *args.fine_ratio;
    }
    if (args.strategy.has_value()) {
        spec.global_strategy = avprune::strategy_from_name(*args.strategy);
    }
    if (args.cutoff.has_value()) {
        if (*args.cutoff == "auto") {
            spec.cutoff.reset();
        } else {
            spec.cutoff = static_cast<std::size_t>(std::strtoull(args.cutoff->c_str(), nullptr, 10));
        }
    }
    if (args.trace.has_value()) {
        spec.trace_path = *args.trace;
    }
    if (args.out.has_value()) {
        spec.out_dir = *args.out;
    }
    return spec;
}

// Sweep axes understood by the `sweep` subcommand.
std::vector<ExperimentSpec> expand_sweep(const ExperimentSpec& base, const json& sweep) {
    const std::string axis = sweep.at("axis").get<std::string>();
    std::vector<ExperimentSpec> specs;
    for (const json& value : sweep.at("values")) {
        ExperimentSpec spec = base;
        std::string label;
        if (axis == "fine_ratio") {
            spec.prune.fine_ratio = value.get<double>();
            label = value.dump();
        } else if (axis == "alpha") {
            spec.prune.alpha = value.get<double>();
            label = value.dump();
        } else if (axis == "cutoff") {
            spec.cutoff = value.get<std::size_t>();
            label = value.dump();
        } else if (axis == "global_strategy") {
            spec.global_strategy = avprune::strategy_from_name(value.get<std::string>());
            label = value.get<std::string>();
        } else if (axis == "fine_strategy") {
            spec.fine_strategy = avprune::strategy_from_name(value.get<std::string>());
            label = value.get<std::string>();
        } else if (axis == "seed") {
            spec.seed = value.get<std::uint64_t>();
            label = value.dump();
        } else {
            throw avprune::ConfigError("unknown sweep axis: " + axis);
        }
        spec.name = base.name + "_" + axis + "=" + label;
        if (!base.out_dir.empty()) {
            spec.out_dir = base.out_dir / spec.name;
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

json error_json(const char* type, const std::exception& e) {
    return json{{"error", {{"type", type}, {"message", e.what()}}}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage multimodal token pruning engine"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* cmd_calibrate = app.add_subcommand("calibrate", "derive the global cutoff");
    CLI::App* cmd_run = app.add_subcommand("run", "vanilla vs pruned decode");
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "experiment matrix from config");
    CLI::App* cmd_trace = app.add_subcommand("trace-dump", "write an attention trace");
    CLI::App* cmd_heatmap = app.add_subcommand("heatmap", "rollout heatmap CSV export");
    for (CLI::App* cmd : {cmd_calibrate, cmd_run, cmd_sweep, cmd_trace, cmd_heatmap}) {
        add_common_options(cmd, args);
    }
    cmd_heatmap->add_option("--layer", args.layer, "rollout layer (default: middle)");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentSpec spec = build_spec(args);

        if (cmd_calibrate->parsed()) {
            auto outcome = avprune::run_calibration(spec);
            if (!spec.out_dir.empty()) {
                std::filesystem::create_directories(spec.out_dir);
                std::ofstream os(spec.out_dir / "calibration.json", std::ios::trunc);
                os << outcome.report.dump(2) << "\n";
            }
            std::cout << outcome.report.dump(2) << "\n";
        } else if (cmd_run->parsed()) {
            auto outcome = avprune::run_experiment(spec);
            json brief{{"aggregate", outcome.report["aggregate"]},
                       {"config_hash", outcome.report["config_hash"]},
                       {"out", spec.out_dir.string()}};
            std::cout << brief.dump(2) << "\n";
        } else if (cmd_sweep->parsed()) {
            if (args.config_path.empty()) {
                throw avprune::ConfigError("sweep requires --config with a sweep section");
            }
            std::ifstream is(args.config_path);
            json j = json::parse(is);
            if (!j.contains("sweep")) {
                throw avprune::ConfigError("config has no sweep section");
            }
            auto specs = expand_sweep(spec, j["sweep"]);
            auto outcomes = avprune::run_sweep(specs, args.workers, spec.out_dir);
            json brief = json::array();
            for (std::size_t i = 0; i < outcomes.size(); ++i) {
                brief.push_back(json{{"name", specs[i].name},
                                     {"aggregate", outcomes[i].report["aggregate"]}});
            }
            std::cout << brief.dump(2) << "\n";
        } else if (cmd_trace->parsed()) {
            if (spec.out_dir.empty()) {
                throw avprune::ConfigError("trace-dump requires --out <file>");
            }
            avprune::dump_trace(spec, spec.out_dir);
            std::cout << json{{"trace", spec.out_dir.string()}}.dump(2) << "\n";
        } else if (cmd_heatmap->parsed()) {
            if (spec.out_dir.empty()) {
                throw avprune::ConfigError("heatmap requires --out <dir>");
            }
            const std::size_t layer =
                args.layer.value_or(spec.prune.resolved_middle(spec.model.layers));
            avprune::export_heatmaps(spec, layer, spec.out_dir);
            std::cout << json{{"layer", layer}, {"out", spec.out_dir.string()}}.dump(2) << "\n";
        }
        return 0;
    } catch (const avprune::ConfigError& e) {
        std::cout << error_json("config_error", e).dump(2) << "\n";
    } catch (const avprune::InputError& e) {
        std::cout << error_json("input_error", e).dump(2) << "\n";
    } catch (const avprune::FormatError& e) {
        std::cout << error_json("format_error", e).dump(2) << "\n";
    } catch (const avprune::TruncationError& e) {
        std::cout << error_json("truncation_error", e).dump(2) << "\n";
    } catch (const avprune::ValidationError& e) {
        std::cout << error_json("validation_error", e).dump(2) << "\n";
    } catch (const std::exception& e) {
        std::cout << error_json("internal_error", e).dump(2) << "\n";
    }
    return 1;
}
