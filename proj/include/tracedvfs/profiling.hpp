#pragma once

#include <functional>
#include <vector>

#include "tracedvfs/cluster_sim.hpp"
#include "tracedvfs/path_reconstructor.hpp"
#include "tracedvfs/pattern_analyzer.hpp"
#include "tracedvfs/perf_model.hpp"

namespace tracedvfs {

/// Complete paths whose BEGIN falls inside [from, to).
std::vector<const CausalPath*> paths_between(const ReconstructionReport& report, Micros from, Micros to);

/// Top-N patterns of one finished run's runtime phase. Ids are fraction ranks.
PatternWindow run_patterns(const SimResult& result, const ReconstructionReport& report, int k, int n);

/// Mean per-tier service time percentages over the runtime phase of a run.
std::vector<double> run_service_percentages(const SimResult& result, const ReconstructionReport& report);

struct ProfilingPlan {
    SimConfig base;                  // nodes, workload template, seed
    std::vector<int> client_levels;  // one load level each
    std::vector<int> tiers_to_sweep;
    double runtime_s = 60.0;
    int k = 10;
    int pattern_count = 10;
    int jobs = 1;
};

/// Experiment count: |client_levels| x |grid of each swept tier|.
std::size_t profiling_run_count(const ProfilingPlan& plan);

/**
 * Sweeps each tier in tiers_to_sweep over its frequency list at every load
 * level with the other tiers at max. Pattern ids come from a reference
 * baseline run at the highest load level; each run's clusters are matched
 * to those by centroid.
 */
ProfilingDataset run_profiling(const ProfilingPlan& plan,
                               const std::function<void(std::size_t done, std::size_t total)>& progress = {});

/// Tiers to sweep for a config: dominated tiers of a baseline run.
std::vector<int> detect_dominated_tiers(const SimConfig& config, double threshold = 0.5);

}  // namespace tracedvfs
