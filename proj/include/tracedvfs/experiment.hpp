#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tracedvfs/cluster_sim.hpp"
#include "tracedvfs/control_loop.hpp"
#include "tracedvfs/perf_model.hpp"
#include "tracedvfs/profiling.hpp"

namespace tracedvfs {

/// Everything one experiment needs besides the pre_model.
struct Scenario {
    SimConfig sim;
    std::string workload = "read_only";
    ControllerKind controller = ControllerKind::PowerTracer;
    double factor = 3.0;
    int patterns = 5;
    int k = 10;
    double up = 1.2;
    double lp = 0.8;
    ControlSchedule schedule;
    int level_confirm = 3;
    double level_margin = 0.75;
    Micros ondemand_period = 10'000;
    double ondemand_up = 0.80;

    std::vector<int> profile_clients;
    double profile_runtime_s = 60.0;
    std::string profile_tiers = "auto";  // auto | all | comma list
    double dominance_threshold = 0.5;
    bool global_gamma = false;
    int profile_patterns = 10;
};

/// Defaults for a built-in workload: read_only (factor 3, 0.5 s deadline,
/// profiling at 50..500 clients) or read_write (factor 5, 0.2 s, 100..1000).
Scenario default_scenario(const std::string& workload, int clients = 300);

/**
 * key = value lines, '#' comments. Keys:
 *   workload, clients, think_time_s, demand_cv, up_ramp_s, runtime_s,
 *   down_ramp_s, load_steps (at_s:clients,...), network_latency_us, seed,
 *   deadline_ms, controller, factor, patterns, k, up, lp,
 *   sampling_period_s, sampling_interval_s, control_period_s, lookback_s,
 *   level_confirm, level_margin, ondemand_period_ms, ondemand_up,
 *   profile.clients, profile.runtime_s, profile.tiers, profile.dominance,
 *   profile.patterns, global_gamma,
 *   node.<j>.name|freqs|servers|p_idle|p_dyn|alpha
 * Throws ConfigError naming the line.
 */
Scenario parse_scenario(std::istream& in);
Scenario parse_scenario_text(const std::string& text);
Scenario load_scenario(const std::string& path);

/// Resolves profile_tiers ("auto" runs a baseline to find dominated tiers).
std::vector<int> profile_tiers_for(const Scenario& sc);
ProfilingPlan profiling_plan(const Scenario& sc, int jobs = 1);

/// Reference latencies of an all-max run.
struct BaselineInfo {
    SimSummary summary;
    /// Mean latency per pattern id; ids follow `centroids`.
    std::vector<double> sl;
    std::vector<double> centroids;
    double sl_pooled = 0.0;
    std::vector<double> service_percentages;
};

/// With empty centroids the baseline's own top-k ranking defines the ids.
BaselineInfo measure_baseline(const SimConfig& config, const std::vector<double>& centroids, int k);
/// Same, from an all-max result already at hand.
BaselineInfo baseline_info(const SimResult& result, const std::vector<double>& centroids, int k);

struct RunOutcome {
    ControllerKind controller = ControllerKind::Baseline;
    int clients = 0;
    double factor = 0.0;
    int patterns = 0;
    std::uint64_t seed = 0;
    SimResult result;
    std::vector<DecisionRecord> decisions;
    int latency_columns = 1;
    std::vector<double> thresholds;
    std::size_t observations = 0;
    std::size_t fast_modulations = 0;
    double saving_pct = 0.0;
    double miss_ratio = 0.0;
    double mean_latency_us = 0.0;
    double mean_power_w = 0.0;
    double baseline_power_w = 0.0;
};

/// One controlled run of sc.sim against a same-seed baseline.
RunOutcome run_controlled(const Scenario& sc, ControllerKind controller, const PerformanceModel* model,
                          const BaselineInfo& baseline, double factor, int patterns);

/// Convenience: measures the baseline itself, then runs.
RunOutcome run_scenario(const Scenario& sc, const PerformanceModel* model);

void write_summary_csv(std::ostream& out, const std::vector<RunOutcome>& runs);

struct ExperimentPlan {
    std::vector<ControllerKind> controllers;
    std::vector<int> clients;
    std::vector<double> factors;
    std::vector<int> patterns;
    int replicas = 1;
    std::uint64_t seed = 1;
    int jobs = 1;

    void validate() const;
};

struct ComparisonRow {
    ControllerKind controller = ControllerKind::Baseline;
    int clients = 0;
    double factor = 0.0;
    int patterns = 0;
    int replica = 0;
    std::uint64_t seed = 0;
    double saving_pct = 0.0;
    double miss_ratio = 0.0;
    double mean_latency_us = 0.0;
    double mean_power_w = 0.0;
    double baseline_power_w = 0.0;
    std::size_t requests = 0;
    std::string error;  // empty on success
};

/// Seed of a replica; shared by every controller and client level.
std::uint64_t replica_seed(std::uint64_t base, int replica);

/// Cartesian sweep with paired seeds. Failed cells carry an error message.
std::vector<ComparisonRow> run_comparison(const Scenario& sc, const ExperimentPlan& plan,
                                          const PerformanceModel* model);

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
/// Means over replicas, one line per (controller, clients, factor, N).
void write_comparison_table(std::ostream& out, const std::vector<ComparisonRow>& rows);

}  // namespace tracedvfs
