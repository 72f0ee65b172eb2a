#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mixsched/pg_driver.hpp"

namespace mixsched {

// Invalid experiment file; the message carries the offending line when known.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StabilityProbeSpec {
    std::string name;
    std::vector<double> weights; // mixture over the experiment's controllers
};

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 0;
    NetworkConfig network;
    std::optional<ArrivalSchedule> schedule;
    std::vector<std::string> controllers;
    InitialDistribution initial;
    std::string initial_label = "uniform";
    PGConfig pg;

    std::filesystem::path out_dir;
    bool write_trace = true;
    bool dump_evaluation = false;

    double grid_resolution = 0.01;
    long stability_slots = 0;
    std::vector<StabilityProbeSpec> stability_probes;
};

ExperimentConfig parse_experiment(const std::string& yaml_text, const std::string& source_name = "<config>");
ExperimentConfig load_experiment(const std::filesystem::path& path);

// One metrics.csv row. Wall-clock time is written to timing.json.
struct MetricsRow {
    long t = 0;
    std::vector<double> probs;
    double value = 0.0;
    std::vector<double> mean_backlog;
};

std::string metrics_header(std::size_t n_controllers, std::size_t n_queues);
std::vector<MetricsRow> metrics_rows(const RunTrace& trace);

struct ExperimentResult {
    RunTrace trace;
    nlohmann::json summary;
};

// PG run plus artifacts: metrics.csv, timing.json, trace.csv (optional),
// summary.json, and stability.csv when probes are configured.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct ComparisonRow {
    std::string policy;
    double value = 0.0; // V(mu); the discounted backlog is -value
};

struct ComparisonResult {
    std::vector<ComparisonRow> rows; // base controllers, lqf, then "learned"
    double learned_value = 0.0;
    double best_base_value = 0.0;
    double lqf_value = 0.0;
    bool learned_beats_base = false;
};

// Exact V(mu) of each base controller, LQF and the learned mixture on the
// experiment's truncated model (rates of the final schedule segment). Writes compare.csv.
ComparisonResult compare_values(const ExperimentConfig& config);
ComparisonResult compare_values(const ExperimentConfig& config, const RunTrace& trace);

// Exact-gradient run plus the rate-of-convergence check. Writes bound.csv and bound_summary.json.
BoundReport verify_bound(const ExperimentConfig& config);

} // namespace mixsched
