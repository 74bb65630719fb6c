#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracedvfs/trace_model.hpp"

namespace tracedvfs {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// P(f, u) = p_idle + p_dyn_max * u * (f / f_max)^alpha
struct PowerParams {
    double p_idle_w = 100.0;
    double p_dyn_max_w = 25.0;
    double alpha = 3.0;
};

double node_power(const PowerParams& power, double freq_ghz, double max_freq_ghz, double utilization);

struct NodeSpec {
    std::string name;
    std::vector<double> freq_levels_ghz;  // strictly increasing
    int server_count = 1;
    PowerParams power;

    int max_level() const { return static_cast<int>(freq_levels_ghz.size()) - 1; }
    double max_freq() const { return freq_levels_ghz.back(); }
};

/// Cluster power with every node at full utilisation. min vs max of this
/// bounds the relative saving any policy can reach.
double full_load_power(std::span<const NodeSpec> nodes, std::span<const int> levels);
double max_power_saving(std::span<const NodeSpec> nodes);

/**
 * One processing visit of a request. Hops are listed in call order
 * (pre-order): a hop on tier j is called by the latest earlier hop on tier
 * j-1. A visit's cycles are split evenly over the segments between its
 * outgoing calls.
 */
struct Hop {
    int tier = 0;
    double cycles = 0.0;
};

struct RequestClass {
    std::string name;
    std::uint64_t request_size = 0;  // first message size, the pattern signal
    std::vector<Hop> hops;
    std::uint64_t reply_size = 1024;
    std::uint64_t call_size = 256;
};

struct LoadStep {
    Micros at = 0;
    int clients = 0;
};

struct WorkloadSpec {
    std::string name;
    std::vector<RequestClass> classes;
    std::vector<std::vector<double>> transition;  // row-stochastic, indexed by class
    /// Class of each client's first request; -1 draws it from the stationary mix.
    int initial_class = -1;
    int client_count = 0;
    Micros think_time_mean = 7 * kMicrosPerSecond;
    /// Coefficient of variation of per-hop demand (lognormal, mean 1).
    double demand_cv = 0.0;
    double up_ramp_s = 10.0;
    double runtime_s = 300.0;
    double down_ramp_s = 10.0;
    std::vector<LoadStep> load_steps;

    Micros runtime_start() const;
    Micros runtime_end() const;
    Micros total_duration() const;
};

void validate(const WorkloadSpec& workload, int tier_count);

/// Stationary distribution of the transition table (power iteration).
std::vector<double> stationary_mix(const WorkloadSpec& workload);

/// Builds a row-stochastic table whose stationary distribution is `mix`:
/// blend of i.i.d. draws and a Metropolis walk on a ring of classes.
std::vector<std::vector<double>> transition_table_for(std::span<const double> mix, double locality);

/// Built-in nodes and workloads.
std::vector<NodeSpec> default_nodes();
WorkloadSpec read_only_workload(int clients);
WorkloadSpec read_write_workload(int clients);
WorkloadSpec workload_by_name(const std::string& name, int clients);

struct SimConfig {
    std::vector<NodeSpec> nodes;
    WorkloadSpec workload;
    Micros network_latency = 200;
    std::uint64_t seed = 1;
    Micros deadline = 500'000;
    /// Starting level per node; empty means all at max.
    std::vector<int> initial_levels;
};

void validate(const SimConfig& config);

struct TierInterval {
    int tier = 0;
    Micros start = 0;
    Micros end = 0;
};

struct RequestRecord {
    std::uint64_t id = 0;
    int client = 0;
    int class_index = 0;
    Micros begin = 0;
    Micros end = -1;
    std::vector<Micros> tier_busy;
    std::vector<TierInterval> intervals;

    bool completed() const { return end >= 0; }
    Micros latency() const { return end - begin; }
};

struct PowerSample {
    Micros t = 0;
    std::vector<double> node_watts;
    double total_watts = 0.0;
};

struct FrequencyChange {
    Micros t = 0;
    int node = 0;
    int old_level = 0;
    int new_level = 0;
};

/// Busy-slot count as a step function of time.
class UtilizationTrace {
  public:
    void record(Micros t, int busy);
    /// Integral of busy slots over [from, to] in slot-microseconds.
    double busy_time(Micros from, Micros to) const;

  private:
    std::vector<Micros> times_;
    std::vector<int> busy_;
};

struct SimSummary {
    std::size_t requests = 0;
    double mean_latency_us = 0.0;
    double miss_ratio = 0.0;
    double mean_power_w = 0.0;
    double throughput_rps = 0.0;
};

struct SimResult {
    ActivityLog activity_log;
    std::vector<RequestRecord> requests;
    std::vector<PowerSample> power_trace;            // one-second buckets
    std::vector<std::vector<double>> utilization;    // [bucket][node]
    std::vector<UtilizationTrace> busy_traces;       // per node
    std::vector<FrequencyChange> frequency_changes;
    std::vector<int> server_counts;
    double total_energy_j = 0.0;
    double runtime_energy_j = 0.0;
    Micros runtime_start = 0;
    Micros runtime_end = 0;
    Micros duration = 0;
    Micros deadline = 0;
    SimSummary summary;

    /// Requests whose BEGIN falls inside the runtime phase and that completed.
    std::vector<const RequestRecord*> runtime_requests() const;
};

/// busy-slot-time / (server_count * window).
double measure_utilization(const SimResult& result, int node, Micros from, Micros to);

class Simulator;

/// Invoked by the simulator every period(), starting at t = period().
class ControlHook {
  public:
    virtual ~ControlHook() = default;
    virtual Micros period() const = 0;
    virtual void on_tick(Simulator& sim) = 0;
};

class Simulator {
  public:
    explicit Simulator(SimConfig config);
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    /// Runs to completion once.
    SimResult run(std::span<ControlHook* const> hooks = {});

    Micros now() const;
    int tier_count() const;
    const SimConfig& config() const;
    int level(int node) const;
    std::vector<int> levels() const;
    /// Scaler hook: takes effect for service segments that start from now on.
    /// Returns false, leaving the frequency unchanged, for an invalid level.
    bool set_frequency(int node, int level);
    std::span<const Activity> activities() const;
    /// Busy fraction of the node over [from, to], to <= now.
    double utilization(int node, Micros from, Micros to) const;
    /// Cumulative busy time of each CPU slot of the node up to now.
    std::vector<double> slot_busy_time(int node) const;
    int active_clients() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SimResult run_sim(const SimConfig& config, std::span<ControlHook* const> hooks = {});

/// All nodes at max frequency, no controller.
SimResult baseline_run(const SimConfig& config);

/// Per-second power trace: t_us,node0_w,...,total_w
void write_power_csv(std::ostream& out, const SimResult& result);

}  // namespace tracedvfs
