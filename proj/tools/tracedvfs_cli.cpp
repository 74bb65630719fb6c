// tracedvfs: profiling campaigns, controlled runs, comparison sweeps and
// offline trace analysis over the simulated three-tier cluster.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tracedvfs/csv.hpp"
#include "tracedvfs/experiment.hpp"
#include "tracedvfs/path_reconstructor.hpp"
#include "tracedvfs/pattern_analyzer.hpp"
#include "tracedvfs/perf_model.hpp"
#include "tracedvfs/trace_model.hpp"

namespace fs = std::filesystem;
using namespace tracedvfs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

constexpr double kMinR2 = 0.97;

class RuntimeFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ScenarioFlags {
    std::string config;
    std::string workload = "read_only";
    long long seed = -1;
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& f) {
    auto* config = cmd->add_option("--config", f.config, "Scenario file (key = value lines)");
    cmd->add_option("--workload", f.workload, "Built-in scenario when no --config: read_only or read_write")
        ->excludes(config);
    cmd->add_option("--seed", f.seed, "Override the scenario seed")->check(CLI::NonNegativeNumber);
}

Scenario load(const ScenarioFlags& f) {
    Scenario sc = f.config.empty() ? default_scenario(f.workload) : load_scenario(f.config);
    if (f.seed >= 0) sc.sim.seed = static_cast<std::uint64_t>(f.seed);
    return sc;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
    return out;
}

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw RuntimeFailure("cannot create '" + dir + "': " + ec.message());
}

PerformanceModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open pre_model '" + path + "'");
    try {
        return parse_pre_model(in);
    } catch (const ModelError& e) {
        throw ConfigError("pre_model '" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct ProfileArgs {
    ScenarioFlags scenario;
    std::string out = ".";
    std::string tiers;
    int jobs = 1;
    bool lenient = false;
};

int cmd_profile(const ProfileArgs& a) {
    Scenario sc = load(a.scenario);
    if (!a.tiers.empty()) sc.profile_tiers = a.tiers;
    const ProfilingPlan plan = profiling_plan(sc, a.jobs);
    const std::size_t total = profiling_run_count(plan);
    std::cerr << "profiling: " << plan.client_levels.size() << " loads x " << plan.tiers_to_sweep.size()
              << " tier(s) = " << total << " runs\n";
    std::size_t step = std::max<std::size_t>(1, total / 10);
    const ProfilingDataset data = run_profiling(plan, [&](std::size_t done, std::size_t n) {
        if (done % step == 0 || done == n) std::cerr << "  " << done << "/" << n << "\n";
    });
    FitOptions opts;
    opts.global_gamma = sc.global_gamma;
    const PerformanceModel model = fit_model(data, opts);

    make_dir(a.out);
    {
        auto out = open_out(fs::path(a.out) / "pre_model");
        write_pre_model(out, model);
    }
    auto fits = open_out(fs::path(a.out) / "fits.csv");
    write_csv_row(fits, {"load_index", "load_rps", "pattern", "tier", "a", "b", "c", "r2"});
    double worst = 1.0;
    std::size_t below = 0;
    std::size_t count = 0;
    for (std::size_t l = 0; l < model.load_levels.size(); ++l)
        for (int i = 0; i < model.pattern_count; ++i)
            for (int j : model.dominated_tiers) {
                const auto& q = model.coef(l, i, j);
                write_csv_row(fits, {std::to_string(l), format_number(model.load_levels[l]), std::to_string(i),
                                     std::to_string(j), format_number(q.a), format_number(q.b), format_number(q.c),
                                     format_number(q.r2)});
                ++count;
                worst = std::min(worst, q.r2);
                if (q.r2 < kMinR2) {
                    ++below;
                    std::cerr << "low fit: L=" << l << " pattern=" << i << " tier=" << j << " R2=" << format_number(q.r2)
                              << "\n";
                }
            }
    std::cout << "pre_model: " << (fs::path(a.out) / "pre_model").string() << "\n"
              << "fits: " << count << "  min R2: " << format_number(worst) << "  below " << kMinR2 << ": " << below
              << "\n";
    if (below > 0 && !a.lenient) return kExitRuntime;
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct RunArgs {
    ScenarioFlags scenario;
    std::string controller;
    std::string model;
    int clients = -1;
    double factor = 0.0;
    int patterns = 0;
    std::string out = ".";
    bool log = false;
};

int cmd_run(const RunArgs& a) {
    Scenario sc = load(a.scenario);
    if (!a.controller.empty()) sc.controller = parse_controller(a.controller);
    if (a.clients >= 0) sc.sim.workload.client_count = a.clients;
    if (a.factor > 0.0) sc.factor = a.factor;
    if (a.patterns > 0) sc.patterns = a.patterns;
    std::optional<PerformanceModel> model;
    if (!a.model.empty()) model = load_model(a.model);
    if (needs_model(sc.controller) && !model) throw ConfigError("powertracer needs --model (run 'profile' first)");

    const RunOutcome o = run_scenario(sc, model ? &*model : nullptr);

    make_dir(a.out);
    {
        auto out = open_out(fs::path(a.out) / "summary.csv");
        write_summary_csv(out, {o});
    }
    {
        auto out = open_out(fs::path(a.out) / "decisions.csv");
        write_decision_csv(out, o.decisions, o.latency_columns);
    }
    {
        auto out = open_out(fs::path(a.out) / "power.csv");
        write_power_csv(out, o.result);
    }
    if (a.log) {
        auto out = open_out(fs::path(a.out) / "activity.log");
        write_log(out, o.result.activity_log);
    }
    std::cout << to_token(o.controller) << "  clients=" << o.clients << "  seed=" << o.seed << "\n"
              << "  saving      " << format_number(o.saving_pct) << " %\n"
              << "  miss ratio  " << format_number(100.0 * o.miss_ratio) << " %\n"
              << "  latency     " << format_number(o.mean_latency_us / 1000.0) << " ms\n"
              << "  power       " << format_number(o.mean_power_w) << " W (baseline "
              << format_number(o.baseline_power_w) << " W)\n"
              << "  requests    " << o.result.summary.requests << "\n"
              << "  freq changes " << o.result.frequency_changes.size() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
    ScenarioFlags scenario;
    std::vector<std::string> controllers{"powertracer", "powertracer_np", "simpledvs", "ondemand"};
    std::vector<int> clients;
    std::vector<double> factors;
    std::vector<int> patterns;
    int replicas = 1;
    int jobs = 1;
    std::string model;
    std::string out = ".";
};

int cmd_compare(const CompareArgs& a) {
    const Scenario sc = load(a.scenario);
    ExperimentPlan plan;
    for (const auto& c : a.controllers) plan.controllers.push_back(parse_controller(c));
    plan.clients = a.clients.empty() ? std::vector<int>{sc.sim.workload.client_count} : a.clients;
    plan.factors = a.factors.empty() ? std::vector<double>{sc.factor} : a.factors;
    plan.patterns = a.patterns.empty() ? std::vector<int>{sc.patterns} : a.patterns;
    plan.replicas = a.replicas;
    plan.seed = sc.sim.seed;
    plan.jobs = a.jobs;
    plan.validate();
    std::optional<PerformanceModel> model;
    if (!a.model.empty()) model = load_model(a.model);

    const auto rows = run_comparison(sc, plan, model ? &*model : nullptr);

    make_dir(a.out);
    {
        auto out = open_out(fs::path(a.out) / "comparison.csv");
        write_comparison_csv(out, rows);
    }
    std::ostringstream table;
    write_comparison_table(table, rows);
    {
        auto out = open_out(fs::path(a.out) / "comparison.txt");
        out << table.str();
    }
    std::cout << table.str();
    const auto failed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.error.empty(); });
    if (failed > 0) {
        std::cerr << failed << " cell(s) failed, see comparison.csv\n";
        return kExitRuntime;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct TraceArgs {
    std::string log;
    int k = 10;
    int patterns = 10;
    int tiers = 0;
    std::string out;
};

int cmd_trace(const TraceArgs& a) {
    std::ifstream in(a.log);
    if (!in) throw ConfigError("cannot open log '" + a.log + "'");
    ActivityLog log;
    try {
        log = a.tiers > 0 ? parse_log(in, a.tiers) : parse_log(in);
    } catch (const TraceParseError& e) {
        throw ConfigError(a.log + ": " + e.what());
    }

    std::ofstream file;
    if (!a.out.empty()) file = open_out(a.out);
    std::ostream& out = a.out.empty() ? std::cout : file;
    write_pattern_csv_header(out, log.tier_count);
    if (log.activities.empty()) return kExitOk;

    const auto report = reconstruct(log);
    const auto paths = report.complete_paths();
    if (paths.empty()) {
        std::cerr << "warning: no complete paths (" << report.incomplete_count << " incomplete)\n";
        return kExitOk;
    }
    WindowInput w;
    w.window_start = log.activities.front().timestamp;
    w.window_end = log.activities.back().timestamp + 1;
    w.tier_count = log.tier_count;
    for (const auto& act : log.activities)
        if (act.kind == ActivityKind::Begin) ++w.begin_count;
    const PatternWindow window = top_patterns(paths, a.k, a.patterns, w);
    write_pattern_csv_rows(out, window, log.tier_count);
    std::cerr << paths.size() << " complete paths, " << report.incomplete_count << " incomplete, "
              << window.cluster_count << " clusters\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trace-driven DVFS for multi-tier server clusters"};
    app.require_subcommand(1);

    ProfileArgs pa;
    auto* profile = app.add_subcommand("profile", "Sweep frequencies under load and fit the pre_model");
    add_scenario_flags(profile, pa.scenario);
    profile->add_option("--out", pa.out, "Output directory for pre_model and fits.csv");
    profile->add_option("--tiers", pa.tiers, "Tiers to sweep: auto, all or a comma list");
    profile->add_option("--jobs", pa.jobs, "Parallel simulations")->check(CLI::PositiveNumber);
    profile->add_flag("--lenient", pa.lenient, "Only warn when a fit has R2 below 0.97");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "One controlled run against a same-seed baseline");
    add_scenario_flags(run, ra.scenario);
    run->add_option("--controller", ra.controller, "powertracer, powertracer_np, simpledvs, ondemand or baseline");
    run->add_option("--model", ra.model, "pre_model file (required by powertracer)");
    run->add_option("--clients", ra.clients, "Client count")->check(CLI::NonNegativeNumber);
    run->add_option("--factor", ra.factor, "Threshold factor over baseline latency")->check(CLI::PositiveNumber);
    run->add_option("--patterns", ra.patterns, "Main pattern count N")->check(CLI::PositiveNumber);
    run->add_option("--out", ra.out, "Output directory");
    run->add_flag("--log", ra.log, "Also write the activity log");

    CompareArgs ca;
    auto* compare = app.add_subcommand("compare", "Paired-seed sweep over controllers, loads, factors and N");
    add_scenario_flags(compare, ca.scenario);
    compare->add_option("--controller", ca.controllers, "Controllers (comma list)")->delimiter(',');
    compare->add_option("--clients", ca.clients, "Client counts (comma list)")->delimiter(',');
    compare->add_option("--factor", ca.factors, "Threshold factors (comma list)")->delimiter(',');
    compare->add_option("--patterns", ca.patterns, "Pattern counts (comma list)")->delimiter(',');
    compare->add_option("--replicas", ca.replicas, "Replicas per cell")->check(CLI::PositiveNumber);
    compare->add_option("--jobs", ca.jobs, "Parallel simulations")->check(CLI::PositiveNumber);
    compare->add_option("--model", ca.model, "pre_model file (required by powertracer)");
    compare->add_option("--out", ca.out, "Output directory");

    TraceArgs ta;
    auto* trace = app.add_subcommand("trace", "Reconstruct and classify an activity log offline");
    trace->add_option("--log", ta.log, "Activity log")->required();
    trace->add_option("--k", ta.k, "Clusters")->check(CLI::PositiveNumber);
    trace->add_option("--patterns", ta.patterns, "Patterns to report")->check(CLI::PositiveNumber);
    trace->add_option("--tiers", ta.tiers, "Tier count (default: inferred)")->check(CLI::PositiveNumber);
    trace->add_option("--out", ta.out, "Output CSV (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*profile) return cmd_profile(pa);
        if (*run) return cmd_run(ra);
        if (*compare) return cmd_compare(ca);
        if (*trace) return cmd_trace(ta);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
