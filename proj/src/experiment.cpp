#include "tracedvfs/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "tracedvfs/csv.hpp"
#include "tracedvfs/parallel.hpp"

namespace tracedvfs {

Scenario default_scenario(const std::string& workload, int clients) {
    Scenario sc;
    sc.sim.nodes = default_nodes();
    sc.sim.workload = workload_by_name(workload, clients);
    sc.workload = sc.sim.workload.name;
    if (sc.workload == "read_write") {
        sc.sim.deadline = 200'000;
        sc.factor = 5.0;
        for (int c = 100; c <= 1000; c += 100) sc.profile_clients.push_back(c);
    } else {
        sc.sim.deadline = 500'000;
        sc.factor = 3.0;
        for (int c = 50; c <= 500; c += 50) sc.profile_clients.push_back(c);
    }
    return sc;
}

// ---------------------------------------------------------------------------
// scenario parsing

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    return out;
}

struct Entry {
    std::string value;
    int line;
};

class Reader {
  public:
    explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    double number(const std::string& key, double fallback) {
        if (!take(key)) return fallback;
        return to_double(key);
    }

    long long integer(const std::string& key, long long fallback) {
        if (!take(key)) return fallback;
        const auto& e = entries_.at(key);
        long long v = 0;
        const auto* end = e.value.data() + e.value.size();
        const auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
        if (ec != std::errc() || ptr != end) fail(key, "expected an integer");
        return v;
    }

    std::string text(const std::string& key, const std::string& fallback) {
        if (!take(key)) return fallback;
        return entries_.at(key).value;
    }

    bool flag(const std::string& key, bool fallback) {
        if (!take(key)) return fallback;
        const auto& v = entries_.at(key).value;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(key, "expected true or false");
        return false;
    }

    std::vector<double> numbers(const std::string& key) {
        std::vector<double> out;
        take(key);
        for (const auto& item : split(entries_.at(key).value, ',')) out.push_back(parse(key, item));
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError("config line " + std::to_string(entries_.at(key).line) + ": " + key + ": " + what);
    }

    void reject_unused() const {
        for (const auto& [key, e] : entries_)
            if (!used_.count(key)) throw ConfigError("config line " + std::to_string(e.line) + ": unknown key '" + key + "'");
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }

  private:
    bool take(const std::string& key) {
        if (!has(key)) return false;
        used_[key] = true;
        return true;
    }

    double to_double(const std::string& key) const { return parse(key, entries_.at(key).value); }

    double parse(const std::string& key, const std::string& s) const {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0' || !std::isfinite(v)) fail(key, "expected a number, got '" + s + "'");
        return v;
    }

    std::map<std::string, Entry> entries_;
    std::map<std::string, bool> used_;
};

Micros seconds(double s) { return static_cast<Micros>(std::llround(s * kMicrosPerSecond)); }

}  // namespace

Scenario parse_scenario(std::istream& in) {
    std::map<std::string, Entry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (entries.count(key)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        entries[key] = Entry{value, line_no};
    }
    Reader r(std::move(entries));

    const std::string workload = r.text("workload", "read_only");
    const int clients = static_cast<int>(r.integer("clients", 300));
    if (clients < 0) r.fail("clients", "must be >= 0");
    Scenario sc = default_scenario(workload, clients);
    auto& w = sc.sim.workload;
    w.think_time_mean = seconds(r.number("think_time_s", static_cast<double>(w.think_time_mean) / kMicrosPerSecond));
    w.demand_cv = r.number("demand_cv", w.demand_cv);
    w.up_ramp_s = r.number("up_ramp_s", w.up_ramp_s);
    w.runtime_s = r.number("runtime_s", w.runtime_s);
    w.down_ramp_s = r.number("down_ramp_s", w.down_ramp_s);
    if (r.has("load_steps")) {
        const auto raw = r.text("load_steps", "");
        for (const auto& item : split(raw, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) r.fail("load_steps", "expected at_s:clients items");
            char* end = nullptr;
            const double at = std::strtod(item.substr(0, colon).c_str(), &end);
            const auto count = std::strtol(item.substr(colon + 1).c_str(), &end, 10);
            w.load_steps.push_back({seconds(at), static_cast<int>(count)});
        }
    }
    sc.sim.network_latency = r.integer("network_latency_us", sc.sim.network_latency);
    sc.sim.seed = static_cast<std::uint64_t>(r.integer("seed", static_cast<long long>(sc.sim.seed)));
    sc.sim.deadline = static_cast<Micros>(std::llround(r.number("deadline_ms", static_cast<double>(sc.sim.deadline) / 1000.0) * 1000.0));

    if (r.has("controller")) sc.controller = parse_controller(r.text("controller", ""));
    sc.factor = r.number("factor", sc.factor);
    sc.patterns = static_cast<int>(r.integer("patterns", sc.patterns));
    sc.k = static_cast<int>(r.integer("k", sc.k));
    sc.up = r.number("up", sc.up);
    sc.lp = r.number("lp", sc.lp);
    sc.schedule.sampling_period = seconds(r.number("sampling_period_s", 1.0));
    sc.schedule.sampling_interval = seconds(r.number("sampling_interval_s", 5.0));
    sc.schedule.control_period = seconds(r.number("control_period_s", 1.0));
    sc.schedule.lookback = seconds(r.number("lookback_s", 10.0));
    sc.level_confirm = static_cast<int>(r.integer("level_confirm", sc.level_confirm));
    sc.level_margin = r.number("level_margin", sc.level_margin);
    sc.ondemand_period = static_cast<Micros>(std::llround(r.number("ondemand_period_ms", 10.0) * 1000.0));
    sc.ondemand_up = r.number("ondemand_up", sc.ondemand_up);

    if (r.has("profile.clients")) {
        sc.profile_clients.clear();
        for (double c : r.numbers("profile.clients")) sc.profile_clients.push_back(static_cast<int>(c));
    }
    sc.profile_runtime_s = r.number("profile.runtime_s", sc.profile_runtime_s);
    sc.profile_tiers = r.text("profile.tiers", sc.profile_tiers);
    sc.dominance_threshold = r.number("profile.dominance", sc.dominance_threshold);
    sc.profile_patterns = static_cast<int>(r.integer("profile.patterns", sc.profile_patterns));
    sc.global_gamma = r.flag("global_gamma", sc.global_gamma);

    // node.<j>.<field>
    std::vector<std::string> node_keys;
    for (const auto& [key, e] : r.entries())
        if (key.rfind("node.", 0) == 0) node_keys.push_back(key);
    for (const auto& key : node_keys) {
        const auto parts = split(key, '.');
        if (parts.size() != 3) r.fail(key, "expected node.<index>.<field>");
        int j = -1;
        const auto [ptr, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), j);
        if (ec != std::errc() || ptr != parts[1].data() + parts[1].size() || j < 0 || j > 16)
            r.fail(key, "bad node index");
        if (static_cast<std::size_t>(j) >= sc.sim.nodes.size()) sc.sim.nodes.resize(static_cast<std::size_t>(j) + 1);
        auto& node = sc.sim.nodes[static_cast<std::size_t>(j)];
        const auto& field = parts[2];
        if (field == "name") node.name = r.text(key, "");
        else if (field == "freqs") node.freq_levels_ghz = r.numbers(key);
        else if (field == "servers") node.server_count = static_cast<int>(r.integer(key, 1));
        else if (field == "p_idle") node.power.p_idle_w = r.number(key, 0);
        else if (field == "p_dyn") node.power.p_dyn_max_w = r.number(key, 0);
        else if (field == "alpha") node.power.alpha = r.number(key, 3);
        else r.fail(key, "unknown node field");
    }
    r.reject_unused();

    if (sc.patterns < 1) throw ConfigError("patterns must be >= 1");
    if (sc.k < 1) throw ConfigError("k must be >= 1");
    if (!(sc.factor > 0.0)) throw ConfigError("factor must be positive");
    try {
        ThresholdZone{{1.0}, sc.up, sc.lp}.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    validate(sc.sim);
    return sc;
}

Scenario parse_scenario_text(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return parse_scenario(in);
}

std::vector<int> profile_tiers_for(const Scenario& sc) {
    const int m = static_cast<int>(sc.sim.nodes.size());
    if (sc.profile_tiers == "auto") {
        SimConfig c = sc.sim;
        c.workload.client_count = sc.profile_clients.empty() ? c.workload.client_count : sc.profile_clients.back();
        c.workload.runtime_s = sc.profile_runtime_s;
        c.workload.load_steps.clear();
        return detect_dominated_tiers(c, sc.dominance_threshold);
    }
    std::vector<int> tiers;
    if (sc.profile_tiers == "all") {
        for (int j = 0; j < m; ++j) tiers.push_back(j);
        return tiers;
    }
    for (const auto& item : split(sc.profile_tiers, ',')) {
        int j = -1;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), j);
        if (ec != std::errc() || ptr != item.data() + item.size() || j < 0 || j >= m)
            throw ConfigError("profile.tiers: bad tier '" + item + "'");
        tiers.push_back(j);
    }
    return tiers;
}

ProfilingPlan profiling_plan(const Scenario& sc, int jobs) {
    ProfilingPlan plan;
    plan.base = sc.sim;
    plan.base.initial_levels.clear();
    plan.client_levels = sc.profile_clients;
    plan.tiers_to_sweep = profile_tiers_for(sc);
    plan.runtime_s = sc.profile_runtime_s;
    plan.k = sc.k;
    plan.pattern_count = sc.profile_patterns;
    plan.jobs = jobs;
    return plan;
}

// ---------------------------------------------------------------------------
// runs

BaselineInfo baseline_info(const SimResult& result, const std::vector<double>& centroids, int k) {
    const auto report = reconstruct(result.activity_log);
    PatternWindow w = run_patterns(result, report, k, k);
    BaselineInfo info;
    info.summary = result.summary;
    info.sl_pooled = w.aggregate.avg_server_side_latency;
    info.service_percentages = run_service_percentages(result, report);
    if (centroids.empty()) {
        for (const auto& p : w.patterns) {
            info.centroids.push_back(p.first_message_size_centroid);
            info.sl.push_back(p.avg_server_side_latency);
        }
        return info;
    }
    info.centroids = centroids;
    PatternTracker tracker;
    tracker.seed(std::span<const double>(centroids));
    tracker.assign_ids(w.patterns);
    info.sl.assign(centroids.size(), info.sl_pooled);
    for (const auto& p : w.patterns)
        if (p.pattern_id >= 0 && static_cast<std::size_t>(p.pattern_id) < centroids.size())
            info.sl[static_cast<std::size_t>(p.pattern_id)] = p.avg_server_side_latency;
    return info;
}

BaselineInfo measure_baseline(const SimConfig& config, const std::vector<double>& centroids, int k) {
    return baseline_info(baseline_run(config), centroids, k);
}

RunOutcome run_controlled(const Scenario& sc, ControllerKind controller, const PerformanceModel* model,
                          const BaselineInfo& baseline, double factor, int patterns) {
    RunOutcome out;
    out.controller = controller;
    out.clients = sc.sim.workload.client_count;
    out.factor = factor;
    out.patterns = patterns;
    out.seed = sc.sim.seed;
    out.baseline_power_w = baseline.summary.mean_power_w;

    SimConfig config = sc.sim;
    config.initial_levels.clear();

    if (controller == ControllerKind::Baseline) {
        out.result = run_sim(config);
    } else if (controller == ControllerKind::Ondemand) {
        OndemandGovernor governor(sc.ondemand_period, sc.ondemand_up);
        ControlHook* hooks[] = {&governor};
        out.result = run_sim(config, hooks);
        out.decisions = governor.decisions();
    } else {
        LoopSettings ls;
        ls.kind = controller;
        ls.k = sc.k;
        ls.schedule = sc.schedule;
        ls.level_confirm = sc.level_confirm;
        ls.level_margin = sc.level_margin;
        ls.active_from = config.workload.runtime_start();
        ls.active_until = config.workload.runtime_end();
        ls.zone.up = sc.up;
        ls.zone.lp = sc.lp;
        ls.pattern_centroids = baseline.centroids;
        if (controller == ControllerKind::PowerTracer) {
            if (!model) throw ConfigError("powertracer needs a pre_model (run 'profile' first)");
            if (model->tier_count != static_cast<int>(config.nodes.size()))
                throw ConfigError("pre_model tier count does not match the scenario");
            ls.model = model;
            const auto n = std::min<std::size_t>({static_cast<std::size_t>(patterns), baseline.sl.size(),
                                                  static_cast<std::size_t>(model->pattern_count)});
            for (std::size_t i = 0; i < n; ++i) ls.zone.th.push_back(factor * baseline.sl[i]);
        } else {
            ls.zone.th.push_back(factor * baseline.sl_pooled);
        }
        out.thresholds = ls.zone.th;
        ControlLoop loop(ls);
        ControlHook* hooks[] = {&loop};
        out.result = run_sim(config, hooks);
        out.decisions = loop.decisions();
        out.latency_columns = loop.latency_columns();
        out.observations = loop.observation_count();
        out.fast_modulations = loop.fast_modulation_count();
    }
    out.miss_ratio = out.result.summary.miss_ratio;
    out.mean_latency_us = out.result.summary.mean_latency_us;
    out.mean_power_w = out.result.summary.mean_power_w;
    out.saving_pct = controller == ControllerKind::Baseline || out.baseline_power_w <= 0.0
                         ? 0.0
                         : 100.0 * (out.baseline_power_w - out.mean_power_w) / out.baseline_power_w;
    return out;
}

RunOutcome run_scenario(const Scenario& sc, const PerformanceModel* model) {
    SimConfig base = sc.sim;
    base.initial_levels.clear();
    const std::vector<double> centroids = model ? model->pattern_centroids : std::vector<double>{};
    const BaselineInfo info = measure_baseline(base, centroids, sc.k);
    return run_controlled(sc, sc.controller, model, info, sc.factor, sc.patterns);
}

void write_summary_csv(std::ostream& out, const std::vector<RunOutcome>& runs) {
    write_csv_row(out, {"controller", "clients", "factor", "patterns", "seed", "saving_pct", "miss_ratio",
                        "mean_latency_us", "mean_power_w", "baseline_power_w", "requests", "throughput_rps",
                        "energy_j", "frequency_changes", "fast_modulations"});
    for (const auto& r : runs)
        write_csv_row(out, {std::string(to_token(r.controller)), std::to_string(r.clients), format_number(r.factor),
                            std::to_string(r.patterns), std::to_string(r.seed), format_number(r.saving_pct),
                            format_number(r.miss_ratio), format_number(r.mean_latency_us),
                            format_number(r.mean_power_w), format_number(r.baseline_power_w),
                            std::to_string(r.result.summary.requests), format_number(r.result.summary.throughput_rps),
                            format_number(r.result.runtime_energy_j), std::to_string(r.result.frequency_changes.size()),
                            std::to_string(r.fast_modulations)});
}

// ---------------------------------------------------------------------------
// comparison

void ExperimentPlan::validate() const {
    if (controllers.empty()) throw ConfigError("plan needs at least one controller");
    if (clients.empty()) throw ConfigError("plan needs at least one client count");
    if (factors.empty()) throw ConfigError("plan needs at least one threshold factor");
    if (patterns.empty()) throw ConfigError("plan needs at least one pattern count");
    if (replicas < 1) throw ConfigError("replicas must be >= 1");
    for (int c : clients)
        if (c < 0) throw ConfigError("client counts must be >= 0");
    for (double f : factors)
        if (!(f > 0.0)) throw ConfigError("factors must be positive");
    for (int n : patterns)
        if (n < 1) throw ConfigError("pattern counts must be >= 1");
}

std::uint64_t replica_seed(std::uint64_t base, int replica) {
    return base + 7919ULL * static_cast<std::uint64_t>(replica);
}

std::vector<ComparisonRow> run_comparison(const Scenario& sc, const ExperimentPlan& plan, const PerformanceModel* model) {
    plan.validate();
    for (auto c : plan.controllers)
        if (needs_model(c) && !model) throw ConfigError("powertracer needs a pre_model (run 'profile' first)");

    struct BaseCell {
        int replica;
        int clients;
        std::optional<BaselineInfo> info;
        std::string error;
    };
    std::vector<BaseCell> bases;
    for (int r = 0; r < plan.replicas; ++r)
        for (int c : plan.clients) bases.push_back({r, c, std::nullopt, ""});

    auto scenario_for = [&](int replica, int clients) {
        Scenario s = sc;
        s.sim.workload.client_count = clients;
        s.sim.seed = replica_seed(plan.seed, replica);
        s.sim.initial_levels.clear();
        return s;
    };
    const std::vector<double> centroids = model ? model->pattern_centroids : std::vector<double>{};
    parallel_for(bases.size(), plan.jobs, [&](std::size_t b) {
        try {
            const Scenario s = scenario_for(bases[b].replica, bases[b].clients);
            bases[b].info = measure_baseline(s.sim, centroids, s.k);
        } catch (const std::exception& e) {
            bases[b].error = e.what();
        }
    });

    // Cells whose result does not depend on factor or N are simulated once.
    struct Cell {
        std::size_t base;
        ControllerKind controller;
        double factor;
        int patterns;
        std::optional<ComparisonRow> row;
    };
    std::vector<Cell> cells;
    std::map<std::tuple<std::size_t, int, double, int>, std::size_t> unique;
    struct Slot {
        std::size_t cell;
        ComparisonRow row;
    };
    std::vector<Slot> slots;
    for (std::size_t b = 0; b < bases.size(); ++b)
        for (auto ctl : plan.controllers)
            for (double f : plan.factors)
                for (int n : plan.patterns) {
                    const bool uses_factor = ctl != ControllerKind::Baseline && ctl != ControllerKind::Ondemand;
                    const bool uses_n = ctl == ControllerKind::PowerTracer;
                    const auto key = std::make_tuple(b, static_cast<int>(ctl), uses_factor ? f : 0.0, uses_n ? n : 0);
                    auto it = unique.find(key);
                    if (it == unique.end()) {
                        it = unique.emplace(key, cells.size()).first;
                        cells.push_back({b, ctl, f, n, std::nullopt});
                    }
                    ComparisonRow row;
                    row.controller = ctl;
                    row.clients = bases[b].clients;
                    row.factor = f;
                    row.patterns = n;
                    row.replica = bases[b].replica;
                    row.seed = replica_seed(plan.seed, bases[b].replica);
                    slots.push_back({it->second, row});
                }

    parallel_for(cells.size(), plan.jobs, [&](std::size_t c) {
        auto& cell = cells[c];
        const auto& base = bases[cell.base];
        ComparisonRow row;
        if (!base.info) {
            row.error = "baseline failed: " + base.error;
            cell.row = row;
            return;
        }
        try {
            const Scenario s = scenario_for(base.replica, base.clients);
            const RunOutcome o = run_controlled(s, cell.controller, model, *base.info, cell.factor, cell.patterns);
            row.saving_pct = o.saving_pct;
            row.miss_ratio = o.miss_ratio;
            row.mean_latency_us = o.mean_latency_us;
            row.mean_power_w = o.mean_power_w;
            row.baseline_power_w = o.baseline_power_w;
            row.requests = o.result.summary.requests;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        cell.row = row;
    });

    std::vector<ComparisonRow> rows;
    for (auto& slot : slots) {
        const auto& src = *cells[slot.cell].row;
        ComparisonRow row = slot.row;
        row.saving_pct = src.saving_pct;
        row.miss_ratio = src.miss_ratio;
        row.mean_latency_us = src.mean_latency_us;
        row.mean_power_w = src.mean_power_w;
        row.baseline_power_w = src.baseline_power_w;
        row.requests = src.requests;
        row.error = src.error;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    write_csv_row(out, {"controller", "clients", "factor", "patterns", "replica", "seed", "saving_pct", "miss_ratio",
                        "mean_latency_us", "mean_power_w", "baseline_power_w", "requests", "status"});
    for (const auto& r : rows)
        write_csv_row(out, {std::string(to_token(r.controller)), std::to_string(r.clients), format_number(r.factor),
                            std::to_string(r.patterns), std::to_string(r.replica), std::to_string(r.seed),
                            format_number(r.saving_pct), format_number(r.miss_ratio), format_number(r.mean_latency_us),
                            format_number(r.mean_power_w), format_number(r.baseline_power_w),
                            std::to_string(r.requests), r.error.empty() ? "ok" : "error: " + r.error});
}

void write_comparison_table(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    struct Agg {
        double saving = 0, miss = 0, latency = 0;
        int count = 0, failed = 0;
    };
    std::vector<std::tuple<int, int, double, int>> order;
    std::map<std::tuple<int, int, double, int>, Agg> groups;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.clients, static_cast<int>(r.controller), r.factor, r.patterns);
        if (!groups.count(key)) order.push_back(key);
        auto& g = groups[key];
        if (!r.error.empty()) {
            ++g.failed;
            continue;
        }
        g.saving += r.saving_pct;
        g.miss += r.miss_ratio;
        g.latency += r.mean_latency_us;
        ++g.count;
    }
    out << std::left << std::setw(16) << "controller" << std::right << std::setw(8) << "clients" << std::setw(8)
        << "factor" << std::setw(4) << "N" << std::setw(11) << "saving%" << std::setw(11) << "miss%" << std::setw(13)
        << "latency_ms" << '\n';
    for (const auto& key : order) {
        const auto& g = groups[key];
        out << std::left << std::setw(16) << to_token(static_cast<ControllerKind>(std::get<1>(key))) << std::right
            << std::setw(8) << std::get<0>(key) << std::setw(8) << format_number(std::get<2>(key)) << std::setw(4)
            << std::get<3>(key);
        if (g.count == 0) {
            out << "  failed\n";
            continue;
        }
        out << std::fixed << std::setprecision(2) << std::setw(11) << g.saving / g.count << std::setw(11)
            << 100.0 * g.miss / g.count << std::setw(13) << g.latency / g.count / 1000.0;
        out.unsetf(std::ios::floatfield);
        if (g.failed) out << "  (" << g.failed << " failed)";
        out << '\n';
    }
}

}  // namespace tracedvfs
