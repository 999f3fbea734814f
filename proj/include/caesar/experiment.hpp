#pragma once

// Experiment files, run artifacts, and run comparison. A run directory holds
// metrics.csv (one row per round, fixed schema) and summary.json (final
// stats plus the fully resolved configuration).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "caesar/sim.hpp"

namespace caesar {

struct ExperimentSpec {
    SimConfig base;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "runs";
};

// Strict JSON parsing: unknown keys are rejected, missing or mistyped keys
// are reported by name (dotted path for nested objects).
ExperimentSpec parse_experiment_text(const std::string& text);
ExperimentSpec parse_experiment_file(const std::string& path);

// Pretty-printed JSON echo of a SimConfig, same key names the parser accepts.
std::string resolved_config_text(const SimConfig& config);

// Shortest decimal form that parses back to the same value.
std::string format_double(double v);

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rounds);

// Runs one seed, writes out_root/<strategy>-seed<N>/{metrics.csv,summary.json},
// and returns that directory.
std::string run_one(const SimConfig& config, const std::string& out_root);

void run_all(const ExperimentSpec& spec, const std::string& out_root, bool quiet,
             std::ostream& log);

struct MetricsRow {
    std::uint64_t round = 0;
    double accuracy = 0.0;
    double round_time_s = 0.0;
    double cum_time_s = 0.0;
    std::uint64_t round_traffic_bits = 0;
    std::uint64_t cum_traffic_bits = 0;
    double avg_wait_s = 0.0;
};

std::vector<MetricsRow> load_metrics_csv(const std::string& path);

struct RunReport {
    std::string dir;
    bool reached = false;
    std::uint64_t round = 0;           // first round at or above the target
    std::uint64_t traffic_bits = 0;    // cumulative, at that round
    double time_s = 0.0;               // cumulative, at that round
    double mean_wait_s = 0.0;          // mean over all rounds
    double best_accuracy = 0.0;
};

RunReport report_run(const std::string& dir, double target_acc);
void print_report_table(std::ostream& out, const std::vector<RunReport>& reports,
                        double target_acc);
std::string reports_json_text(const std::vector<RunReport>& reports, double target_acc);

}  // namespace caesar
