#include "tracedvfs/control_loop.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "tracedvfs/csv.hpp"
#include "tracedvfs/path_reconstructor.hpp"

namespace tracedvfs {

std::string_view to_token(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::Baseline: return "baseline";
        case ControllerKind::PowerTracer: return "powertracer";
        case ControllerKind::PowerTracerNP: return "powertracer_np";
        case ControllerKind::SimpleDVS: return "simpledvs";
        case ControllerKind::Ondemand: return "ondemand";
    }
    return "baseline";
}

ControllerKind parse_controller(std::string_view name) {
    for (auto k : {ControllerKind::Baseline, ControllerKind::PowerTracer, ControllerKind::PowerTracerNP,
                   ControllerKind::SimpleDVS, ControllerKind::Ondemand})
        if (to_token(k) == name) return k;
    throw ConfigError("unknown controller '" + std::string(name) +
                      "' (valid: powertracer, powertracer_np, simpledvs, ondemand, baseline)");
}

bool needs_model(ControllerKind kind) { return kind == ControllerKind::PowerTracer; }

LoadLevelTracker::LoadLevelTracker(std::vector<double> levels, int confirm, double margin)
    : levels_(std::move(levels)), confirm_(std::max(1, confirm)), margin_(margin) {
    if (levels_.empty()) throw std::invalid_argument("no load levels");
}

bool LoadLevelTracker::update(double rate) {
    const std::size_t candidate = quantize_load(rate, levels_);
    if (!initialized_) {
        initialized_ = true;
        level_ = candidate;
        return true;
    }
    const double current = levels_[level_];
    const bool beyond =
        candidate != level_ && std::abs(rate - current) >= margin_ * std::abs(levels_[candidate] - current);
    if (!beyond) {
        streak_ = 0;
        return false;
    }
    streak_ = (streak_ > 0 && candidate == pending_) ? streak_ + 1 : 1;
    pending_ = candidate;
    if (streak_ < confirm_) return false;
    level_ = candidate;
    streak_ = 0;
    return true;
}

void write_decision_csv(std::ostream& out, const std::vector<DecisionRecord>& records, int latency_columns) {
    std::vector<std::string> header{"t_us", "controller", "direction", "tier", "old_level", "new_level", "reason"};
    for (int i = 1; i <= latency_columns; ++i) header.push_back("D" + std::to_string(i) + "_us");
    write_csv_row(out, header);
    for (const auto& r : records) {
        std::vector<std::string> row{std::to_string(r.t), std::string(to_token(r.controller)),
                                     std::string(to_token(r.direction)), r.tier ? std::to_string(*r.tier) : "",
                                     r.tier ? std::to_string(r.old_level) : "", r.tier ? std::to_string(r.new_level) : "",
                                     std::string(to_token(r.reason))};
        for (int i = 0; i < latency_columns; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            row.push_back(idx < r.d.size() && r.d[idx] ? format_number(*r.d[idx]) : "");
        }
        write_csv_row(out, row);
    }
}

ControlLoop::ControlLoop(LoopSettings settings) : settings_(std::move(settings)) {
    if (settings_.kind == ControllerKind::Baseline || settings_.kind == ControllerKind::Ondemand)
        throw ConfigError("control loop drives powertracer, powertracer_np or simpledvs only");
    const auto& s = settings_.schedule;
    if (s.sampling_period <= 0 || s.sampling_interval <= 0 || s.control_period <= 0)
        throw ConfigError("schedule periods must be positive");
    if (s.sampling_period > s.sampling_interval) throw ConfigError("sampling period exceeds sampling interval");
    settings_.zone.validate();
    if (settings_.kind == ControllerKind::PowerTracer) {
        if (settings_.model) {
            if (settings_.zone.th.size() > static_cast<std::size_t>(settings_.model->pattern_count))
                throw ConfigError("more thresholds than modeled patterns");
            load_tracker_.emplace(settings_.model->load_levels, settings_.level_confirm, settings_.level_margin);
        }
    }
    tracker_.seed(std::span<const double>(settings_.pattern_centroids));
}

int ControlLoop::latency_columns() const {
    return settings_.kind == ControllerKind::PowerTracer ? static_cast<int>(settings_.zone.th.size()) : 1;
}

ControllerObservation ControlLoop::observe(Simulator& sim, Micros t) {
    const auto& sched = settings_.schedule;
    const Micros from = t - sched.sampling_period;
    const auto acts = sim.activities();
    auto by_time = [](const Activity& a, Micros v) { return a.timestamp < v; };
    const auto lo = std::lower_bound(acts.begin(), acts.end(), from - sched.lookback, by_time);
    const auto hi = std::lower_bound(acts.begin(), acts.end(), t, by_time);

    ActivityLog slice;
    slice.tier_count = sim.tier_count();
    slice.activities.assign(lo, hi);
    const auto report = reconstruct(slice);
    std::vector<const CausalPath*> paths;
    for (const auto& p : report.paths)
        if (p.complete && p.activities.back().timestamp >= from) paths.push_back(&p);
    std::size_t begins = 0;
    for (auto it = std::lower_bound(acts.begin(), acts.end(), from, by_time); it != hi; ++it)
        if (it->kind == ActivityKind::Begin) ++begins;

    ControllerObservation obs;
    obs.window.window_start = from;
    obs.window.window_end = t;
    obs.window.total_begin_count = begins;
    obs.window.aggregate.avg_tier_service_time.assign(static_cast<std::size_t>(sim.tier_count()), 0.0);
    if (!paths.empty()) {
        WindowInput in{from, t, begins, sim.tier_count()};
        obs.window = top_patterns(paths, settings_.k, settings_.k, in);
        tracker_.assign_ids(obs.window.patterns);
    }
    for (int j = 0; j < sim.tier_count(); ++j) {
        obs.per_node_utilization.push_back(sim.utilization(j, from, t));
        obs.max_level.push_back(sim.config().nodes[static_cast<std::size_t>(j)].max_level());
    }
    obs.current_freq.level = sim.levels();
    obs.period_index = static_cast<int>(observations_);
    return obs;
}

void ControlLoop::record(Simulator& sim, Micros t, const ControlDecision& d, const ControllerObservation& obs,
                         const FrequencyVector& before) {
    DecisionRecord r;
    r.t = t;
    r.controller = settings_.kind;
    r.direction = d.direction;
    r.reason = d.reason;
    r.tier = d.changed_tier;
    if (d.changed_tier) {
        r.old_level = before.level[static_cast<std::size_t>(*d.changed_tier)];
        r.new_level = d.new_freq.level[static_cast<std::size_t>(*d.changed_tier)];
    }
    r.freq_after = FrequencyVector{sim.levels()};
    if (settings_.kind == ControllerKind::PowerTracer) {
        r.d.assign(settings_.zone.th.size(), std::nullopt);
        for (const auto& p : obs.window.patterns)
            if (p.pattern_id >= 0 && static_cast<std::size_t>(p.pattern_id) < r.d.size())
                r.d[static_cast<std::size_t>(p.pattern_id)] = p.avg_server_side_latency;
    } else if (obs.window.aggregate.path_count > 0) {
        r.d.push_back(obs.window.aggregate.avg_server_side_latency);
    } else {
        r.d.push_back(std::nullopt);
    }
    decisions_.push_back(std::move(r));
}

void ControlLoop::on_tick(Simulator& sim) {
    const Micros t = sim.now();
    if (t - settings_.schedule.sampling_period < settings_.active_from || t > settings_.active_until) return;
    const ControllerObservation obs = observe(sim, t);
    ++observations_;
    const FrequencyVector before = obs.current_freq;

    if (load_tracker_) {
        const Micros interval = settings_.schedule.sampling_interval;
        const auto acts = sim.activities();
        auto by_time = [](const Activity& a, Micros v) { return a.timestamp < v; };
        std::size_t begins = 0;
        for (auto it = std::lower_bound(acts.begin(), acts.end(), t - interval, by_time);
             it != acts.end() && it->timestamp < t; ++it)
            if (it->kind == ActivityKind::Begin) ++begins;
        const double rate = static_cast<double>(begins) / (static_cast<double>(interval) / kMicrosPerSecond);
        if (load_tracker_->update(rate)) {
            ++fast_modulations_;
            const auto& nodes = sim.config().nodes;
            const FrequencyVector target =
                fast_modulation(*settings_.model, load_tracker_->level(), settings_.zone.th, nodes);
            bool any = false;
            for (int j = 0; j < sim.tier_count(); ++j) {
                const auto idx = static_cast<std::size_t>(j);
                if (target.level[idx] == before.level[idx]) continue;
                sim.set_frequency(j, target.level[idx]);
                ControlDecision d{target, j, target.level[idx] > before.level[idx] ? Direction::Up : Direction::Down,
                                  Reason::FastModulation};
                record(sim, t, d, obs, before);
                any = true;
            }
            if (!any) record(sim, t, ControlDecision{before, std::nullopt, Direction::Hold, Reason::FastModulation}, obs, before);
            return;
        }
    }

    ControlDecision d;
    switch (settings_.kind) {
        case ControllerKind::PowerTracer: d = powertracer_step(obs, settings_.zone); break;
        case ControllerKind::PowerTracerNP: d = powertracer_np_step(obs, settings_.zone); break;
        case ControllerKind::SimpleDVS: d = simpledvs_step(obs, settings_.zone); break;
        default: return;
    }
    if (d.changed_tier && !sim.set_frequency(*d.changed_tier, d.new_freq.level[static_cast<std::size_t>(*d.changed_tier)])) {
        // Rejected by the scaler: keep the old vector and try again next period.
        d = ControlDecision{before, std::nullopt, Direction::Hold, Reason::AtBoundary};
    }
    record(sim, t, d, obs, before);
}

OndemandGovernor::OndemandGovernor(Micros sampling_period, double up_threshold)
    : period_(sampling_period), up_threshold_(up_threshold) {
    if (period_ <= 0) throw ConfigError("ondemand sampling period must be positive");
    if (!(up_threshold_ > 0.0 && up_threshold_ <= 1.0)) throw ConfigError("ondemand up_threshold must be in (0, 1]");
}

void OndemandGovernor::on_tick(Simulator& sim) {
    const auto& nodes = sim.config().nodes;
    if (last_busy_.empty())
        for (const auto& n : nodes) last_busy_.emplace_back(static_cast<std::size_t>(n.server_count), 0.0);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const auto busy = sim.slot_busy_time(static_cast<int>(n));
        // Policy load is the busiest CPU of the node.
        double u = 0.0;
        for (std::size_t s = 0; s < busy.size(); ++s)
            u = std::max(u, (busy[s] - last_busy_[n][s]) / static_cast<double>(period_));
        last_busy_[n] = busy;
        u = std::clamp(u, 0.0, 1.0);
        const int current = sim.level(static_cast<int>(n));
        const int next = ondemand_level(u, nodes[n].freq_levels_ghz, current, up_threshold_);
        if (next == current) continue;
        sim.set_frequency(static_cast<int>(n), next);
        DecisionRecord r;
        r.t = sim.now();
        r.controller = ControllerKind::Ondemand;
        r.direction = next > current ? Direction::Up : Direction::Down;
        r.reason = Reason::Governor;
        r.tier = static_cast<int>(n);
        r.old_level = current;
        r.new_level = next;
        r.freq_after = FrequencyVector{sim.levels()};
        r.d.push_back(std::nullopt);
        decisions_.push_back(std::move(r));
    }
}

}  // namespace tracedvfs
