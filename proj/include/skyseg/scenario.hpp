#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "skyseg/mission.hpp"

namespace skyseg {

// Parses a config document into a mission config. Every key is checked;
// unknown keys and invalid enum values raise ConfigError naming the
// offender.
MissionConfig parse_config(const nlohmann::json& doc);
MissionConfig load_config(const std::filesystem::path& path);

// Resolved-config echo embedded in every report so a run can be replayed
// from its own output.
nlohmann::ordered_json config_to_json(const MissionConfig& cfg);
MissionConfig config_from_report(const std::filesystem::path& report_path);

// Applies a `key=value` style override (the CLI flag set: seed, rounds,
// followers, fusion, selection, tta, aggregate, corruption, severity,
// alpha).
void apply_override(MissionConfig& cfg, const std::string& key, const std::string& value);

struct RunSummary {
    std::string run_id;
    double mean_miou_coarse = 0.0;
    double mean_miou_fused = 0.0;
    double mean_total_latency_s = 0.0;
    uint64_t refinement_volume_per_patch = 0;   // bytes per refinement grid
    uint64_t stat_volume_per_follower = 0;      // bytes per follower per round
    std::filesystem::path report_path;
    std::filesystem::path csv_path;
};

// Runs one mission and writes report.json, rounds.csv and messages.log
// under out_dir/run_id. Files are written atomically.
RunSummary run_scenario(const MissionConfig& cfg, const std::filesystem::path& out_dir,
                        const std::string& run_id = "run");

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};

// Cartesian product over the axes; one report per cell plus a combined
// summary table (summary.json + summary.csv) under out_dir.
std::vector<RunSummary> run_sweep(const MissionConfig& base, const std::vector<SweepAxis>& axes,
                                  const std::filesystem::path& out_dir);

// Verbosity from the SKYSEG_LOG environment variable (0 = quiet).
int log_level();
void log_line(int level, const std::string& text);

}  // namespace skyseg
