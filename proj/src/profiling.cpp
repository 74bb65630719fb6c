#include "tracedvfs/profiling.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>

#include "tracedvfs/csv.hpp"
#include "tracedvfs/parallel.hpp"

namespace tracedvfs {

std::vector<const CausalPath*> paths_between(const ReconstructionReport& report, Micros from, Micros to) {
    std::vector<const CausalPath*> out;
    for (const auto& p : report.paths)
        if (p.complete && !p.activities.empty() && p.activities.front().timestamp >= from &&
            p.activities.front().timestamp < to)
            out.push_back(&p);
    return out;
}

PatternWindow run_patterns(const SimResult& result, const ReconstructionReport& report, int k, int n) {
    const auto paths = paths_between(report, result.runtime_start, result.runtime_end);
    std::size_t begins = 0;
    for (const auto& a : result.activity_log.activities)
        if (a.kind == ActivityKind::Begin && a.timestamp >= result.runtime_start && a.timestamp < result.runtime_end)
            ++begins;
    WindowInput in{result.runtime_start, result.runtime_end, begins, result.activity_log.tier_count};
    return top_patterns(paths, k, n, in);
}

std::vector<double> run_service_percentages(const SimResult& result, const ReconstructionReport& report) {
    return mean_service_time_percentages(paths_between(report, result.runtime_start, result.runtime_end),
                                         result.activity_log.tier_count);
}

std::size_t profiling_run_count(const ProfilingPlan& plan) {
    std::size_t grid = 0;
    for (int j : plan.tiers_to_sweep) grid += plan.base.nodes.at(static_cast<std::size_t>(j)).freq_levels_ghz.size();
    return plan.client_levels.size() * grid;
}

namespace {

struct RunSpec {
    std::size_t load_index;
    int clients;
    int tier;
    int level;
};

struct RunOutput {
    double load = 0.0;
    std::vector<ProfileSample> samples;
    std::vector<GammaSample> gamma;
    std::vector<double> utilization;  // filled only for all-max runs
};

}  // namespace

ProfilingDataset run_profiling(const ProfilingPlan& plan,
                               const std::function<void(std::size_t, std::size_t)>& progress) {
    if (plan.client_levels.empty()) throw ConfigError("profiling needs at least one load level");
    if (plan.tiers_to_sweep.empty()) throw ConfigError("profiling needs at least one tier to sweep");
    if (!std::is_sorted(plan.client_levels.begin(), plan.client_levels.end()))
        throw ConfigError("profiling load levels must be ascending");
    const int m = static_cast<int>(plan.base.nodes.size());
    for (int j : plan.tiers_to_sweep)
        if (j < 0 || j >= m) throw ConfigError("swept tier " + std::to_string(j) + " out of range");

    auto config_for = [&](int clients, std::vector<int> levels) {
        SimConfig c = plan.base;
        c.workload.client_count = clients;
        c.workload.load_steps.clear();
        c.workload.runtime_s = plan.runtime_s;
        c.initial_levels = std::move(levels);
        return c;
    };
    std::vector<int> all_max;
    for (const auto& n : plan.base.nodes) all_max.push_back(n.max_level());

    // Reference patterns: baseline at the highest load.
    const SimResult ref = run_sim(config_for(plan.client_levels.back(), all_max));
    const auto ref_report = reconstruct(ref.activity_log);
    const PatternWindow ref_window = run_patterns(ref, ref_report, plan.k, plan.pattern_count);

    ProfilingDataset data;
    data.tier_count = m;
    data.pattern_count = static_cast<int>(ref_window.patterns.size());
    data.swept_tiers = plan.tiers_to_sweep;
    for (const auto& p : ref_window.patterns) data.pattern_centroids.push_back(p.first_message_size_centroid);

    std::vector<RunSpec> runs;
    for (std::size_t l = 0; l < plan.client_levels.size(); ++l)
        for (int j : plan.tiers_to_sweep)
            for (int level = 0; level <= plan.base.nodes[static_cast<std::size_t>(j)].max_level(); ++level)
                runs.push_back({l, plan.client_levels[l], j, level});

    std::vector<RunOutput> outputs(runs.size());
    std::atomic<std::size_t> done{0};
    std::mutex progress_mu;
    parallel_for(runs.size(), plan.jobs, [&](std::size_t r) {
        const auto& spec = runs[r];
        std::vector<int> levels = all_max;
        levels[static_cast<std::size_t>(spec.tier)] = spec.level;
        const double ghz = plan.base.nodes[static_cast<std::size_t>(spec.tier)].freq_levels_ghz[static_cast<std::size_t>(spec.level)];
        try {
            const SimResult res = run_sim(config_for(spec.clients, levels));
            const auto report = reconstruct(res.activity_log);
            PatternWindow w = run_patterns(res, report, plan.k, plan.k);
            PatternTracker tracker;
            tracker.seed(std::span<const double>(data.pattern_centroids));
            tracker.assign_ids(w.patterns);

            auto& out = outputs[r];
            out.load = estimate_load(res.activity_log, res.runtime_start, res.runtime_end);
            for (const auto& p : w.patterns) {
                if (p.pattern_id >= data.pattern_count) continue;
                const int i = static_cast<int>(p.pattern_id);
                for (int t = 0; t < m; ++t) {
                    const auto& node = plan.base.nodes[static_cast<std::size_t>(t)];
                    out.samples.push_back({spec.load_index, i, t, spec.tier,
                                           node.freq_levels_ghz[static_cast<std::size_t>(levels[static_cast<std::size_t>(t)])],
                                           p.avg_tier_service_time[static_cast<std::size_t>(t)], p.path_count});
                }
                out.gamma.push_back({spec.load_index, i, p.avg_gap_time(), p.path_count});
            }
            if (levels == all_max)
                for (int t = 0; t < m; ++t)
                    out.utilization.push_back(measure_utilization(res, t, res.runtime_start, res.runtime_end));
        } catch (const std::exception& e) {
            throw std::runtime_error("profiling run (L=" + std::to_string(spec.clients) + " clients, j=" +
                                     std::to_string(spec.tier) + ", F=" + format_number(ghz) + " GHz) failed: " + e.what());
        }
        if (progress) {
            std::lock_guard lock(progress_mu);
            progress(++done, runs.size());
        }
    });

    std::vector<double> load_sum(plan.client_levels.size(), 0.0);
    std::vector<int> load_runs(plan.client_levels.size(), 0);
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto l = runs[r].load_index;
        load_sum[l] += outputs[r].load;
        ++load_runs[l];
        auto& out = outputs[r];
        data.samples.insert(data.samples.end(), out.samples.begin(), out.samples.end());
        data.gamma_samples.insert(data.gamma_samples.end(), out.gamma.begin(), out.gamma.end());
        for (std::size_t t = 0; t < out.utilization.size(); ++t)
            data.utilization_samples.push_back({l, static_cast<int>(t), out.utilization[t]});
    }
    for (std::size_t l = 0; l < load_sum.size(); ++l) {
        const double level = load_sum[l] / load_runs[l];
        if (!data.load_levels.empty() && level <= data.load_levels.back())
            throw ConfigError("profiling load levels are not strictly increasing in measured rate");
        data.load_levels.push_back(level);
    }
    data.run_count = runs.size();
    return data;
}

std::vector<int> detect_dominated_tiers(const SimConfig& config, double threshold) {
    SimConfig c = config;
    c.initial_levels.clear();
    const SimResult res = run_sim(c);
    const auto report = reconstruct(res.activity_log);
    return dominated_tiers(run_service_percentages(res, report), threshold);
}

}  // namespace tracedvfs
