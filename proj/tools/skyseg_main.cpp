#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skyseg/scenario.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir = "reports";
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App* app, CliOptions& opts) {
    app->add_option("--config", opts.config_path, "Scenario config file (JSON)");
    app->add_option("--out", opts.out_dir, "Output directory for reports");

    auto add_override = [app, &opts](const char* flag, const char* key, const char* help) {
        app->add_option_function<std::string>(
            flag, [key, &opts](const std::string& v) { opts.overrides.emplace_back(key, v); }, help);
    };
    add_override("--seed", "seed", "Root seed for scenes, weights and draws");
    add_override("--rounds", "rounds", "Number of protocol rounds");
    add_override("--followers", "followers", "Follower count (0-4)");
    add_override("--fusion", "fusion", "Fusion strategy: replace|prob");
    add_override("--selection", "selection", "Patch selection: random|order|reorder|attention");
    add_override("--tta", "tta", "Adaptation mode: off|local|cross");
    add_override("--aggregate", "aggregate", "Cross-device aggregation: mean|sum");
    add_override("--corruption", "corruption", "Corruption kind: none|snow|fog|frost");
    add_override("--severity", "severity", "Corruption severity 0-5");
}

skyseg::MissionConfig build_config(const CliOptions& opts) {
    skyseg::MissionConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = skyseg::load_config(opts.config_path);
    }
    for (const auto& [key, value] : opts.overrides) {
        skyseg::apply_override(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

std::vector<skyseg::SweepAxis> parse_axes(const std::vector<std::string>& specs) {
    std::vector<skyseg::SweepAxis> axes;
    for (const std::string& spec : specs) {
        size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw skyseg::ConfigError("axis must look like key=v1,v2,... got '" + spec + "'");
        }
        skyseg::SweepAxis axis;
        axis.key = spec.substr(0, eq);
        std::string rest = spec.substr(eq + 1);
        size_t pos = 0;
        while (pos <= rest.size()) {
            size_t comma = rest.find(',', pos);
            if (comma == std::string::npos) comma = rest.size();
            std::string value = rest.substr(pos, comma - pos);
            if (!value.empty()) axis.values.push_back(value);
            pos = comma + 1;
        }
        axes.push_back(std::move(axis));
    }
    return axes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skyseg: leader-follower collaborative segmentation simulator"};
    app.require_subcommand(0, 1);

    CliOptions run_opts;
    CLI::App* run_cmd = app.add_subcommand("run", "Execute one mission and write its report");
    add_common(run_cmd, run_opts);

    CliOptions sweep_opts;
    std::vector<std::string> axis_specs;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run the Cartesian product of axis values");
    add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--axis", axis_specs,
                          "Sweep axis, key=v1,v2,... (repeatable; keys as for run overrides)");

    CliOptions default_opts;
    add_common(&app, default_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sweep_cmd->parsed()) {
            auto axes = parse_axes(axis_specs);
            auto cfg = build_config(sweep_opts);
            auto summaries = skyseg::run_sweep(cfg, axes, sweep_opts.out_dir);
            std::printf("wrote %zu sweep cells under %s\n", summaries.size(),
                        sweep_opts.out_dir.c_str());
            return 0;
        }
        CliOptions& opts = run_cmd->parsed() ? run_opts : default_opts;
        auto cfg = build_config(opts);
        auto summary = skyseg::run_scenario(cfg, opts.out_dir);
        std::printf("run complete: mean coarse mIoU %.2f, mean fused mIoU %.2f\n",
                    summary.mean_miou_coarse, summary.mean_miou_fused);
        std::printf("report: %s\n", summary.report_path.string().c_str());
        return 0;
    } catch (const skyseg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
