#include "tracedvfs/controllers.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tracedvfs {

void ThresholdZone::validate() const {
    if (th.empty()) throw std::invalid_argument("threshold zone has no thresholds");
    for (double t : th)
        if (!(t > 0.0)) throw std::invalid_argument("thresholds must be positive");
    if (!(lp > 0.0 && lp < 1.0 && up > 1.0)) throw std::invalid_argument("zone factors must satisfy 0 < lp < 1 < up");
}

std::string_view to_token(Direction d) {
    switch (d) {
        case Direction::Up: return "up";
        case Direction::Down: return "down";
        case Direction::Hold: return "hold";
    }
    return "hold";
}

std::string_view to_token(Reason r) {
    switch (r) {
        case Reason::Violation: return "violation";
        case Reason::Slack: return "slack";
        case Reason::InZone: return "in-zone";
        case Reason::AtBoundary: return "at-boundary";
        case Reason::NoData: return "no-data";
        case Reason::FastModulation: return "fast-modulation";
        case Reason::Governor: return "governor";
    }
    return "in-zone";
}

namespace {

ControlDecision hold(const ControllerObservation& obs, Reason reason) {
    return ControlDecision{obs.current_freq, std::nullopt, Direction::Hold, reason};
}

/// Tier indices ordered by key, ascending or descending; ties keep the lower index first.
std::vector<int> rank_tiers(const std::vector<double>& key, bool descending) {
    std::vector<int> order(key.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ka = key[static_cast<std::size_t>(a)];
        const double kb = key[static_cast<std::size_t>(b)];
        return descending ? ka > kb : ka < kb;
    });
    return order;
}

ControlDecision move_first(const ControllerObservation& obs, const std::vector<int>& order, Direction dir,
                           Reason reason) {
    for (int j : order) {
        const auto t = static_cast<std::size_t>(j);
        const int level = obs.current_freq.level[t];
        if (dir == Direction::Up && level >= obs.max_level[t]) continue;
        if (dir == Direction::Down && level <= 0) continue;
        ControlDecision d{obs.current_freq, j, dir, reason};
        d.new_freq.level[t] += dir == Direction::Up ? 1 : -1;
        return d;
    }
    return hold(obs, Reason::AtBoundary);
}

/// The step law over (D_i, TH_i, ST_i, fraction_i) records.
ControlDecision step_law(const ControllerObservation& obs, const std::vector<const PatternStats*>& pats,
                         const std::vector<double>& th, const ThresholdZone& zone) {
    if (pats.empty()) return hold(obs, Reason::NoData);
    const auto m = obs.current_freq.level.size();

    std::size_t worst = pats.size();
    double worst_ratio = 0.0;
    bool all_below = true;
    for (std::size_t k = 0; k < pats.size(); ++k) {
        const double d = pats[k]->avg_server_side_latency;
        const double ratio = d / th[k];
        if (d > zone.up * th[k] && (worst == pats.size() || ratio > worst_ratio)) {
            worst = k;
            worst_ratio = ratio;
        }
        if (!(d < zone.lp * th[k])) all_below = false;
    }
    if (worst < pats.size()) {
        std::vector<double> st(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) st[j] = pats[worst]->avg_tier_service_time[j];
        return move_first(obs, rank_tiers(st, true), Direction::Up, Reason::Violation);
    }
    if (all_below) {
        std::vector<double> weighted(m, 0.0);
        for (const auto* p : pats)
            for (std::size_t j = 0; j < m; ++j) weighted[j] += p->fraction * p->avg_tier_service_time[j];
        return move_first(obs, rank_tiers(weighted, false), Direction::Down, Reason::Slack);
    }
    return hold(obs, Reason::InZone);
}

void check(const ControllerObservation& obs) {
    if (obs.max_level.size() != obs.current_freq.level.size())
        throw std::invalid_argument("observation max_level does not match frequency vector");
}

}  // namespace

ControlDecision powertracer_step(const ControllerObservation& obs, const ThresholdZone& zone) {
    check(obs);
    std::vector<std::pair<std::int64_t, const PatternStats*>> present;
    for (const auto& p : obs.window.patterns)
        if (p.pattern_id >= 0 && static_cast<std::size_t>(p.pattern_id) < zone.th.size() && p.path_count > 0)
            present.emplace_back(p.pattern_id, &p);
    std::stable_sort(present.begin(), present.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<const PatternStats*> pats;
    std::vector<double> th;
    for (const auto& [id, p] : present) {
        pats.push_back(p);
        th.push_back(zone.th[static_cast<std::size_t>(id)]);
    }
    return step_law(obs, pats, th, zone);
}

ControlDecision powertracer_np_step(const ControllerObservation& obs, const ThresholdZone& zone) {
    check(obs);
    if (obs.window.aggregate.path_count == 0) return hold(obs, Reason::NoData);
    PatternStats pooled = obs.window.aggregate;
    pooled.fraction = 1.0;
    return step_law(obs, {&pooled}, {zone.th.at(0)}, zone);
}

ControlDecision simpledvs_step(const ControllerObservation& obs, const ThresholdZone& zone) {
    check(obs);
    if (obs.window.aggregate.path_count == 0) return hold(obs, Reason::NoData);
    if (obs.per_node_utilization.size() != obs.current_freq.level.size())
        throw std::invalid_argument("observation lacks per-node utilization");
    const double d = obs.window.aggregate.avg_server_side_latency;
    const double th = zone.th.at(0);
    if (d > zone.up * th) return move_first(obs, rank_tiers(obs.per_node_utilization, true), Direction::Up, Reason::Violation);
    if (d < zone.lp * th) return move_first(obs, rank_tiers(obs.per_node_utilization, false), Direction::Down, Reason::Slack);
    return hold(obs, Reason::InZone);
}

int ondemand_level(double utilization, std::span<const double> freqs_ghz, int current_level, double up_threshold) {
    if (freqs_ghz.empty()) throw std::invalid_argument("no frequency levels");
    const int max_level = static_cast<int>(freqs_ghz.size()) - 1;
    if (utilization > up_threshold) return max_level;
    const double current = freqs_ghz[static_cast<std::size_t>(std::clamp(current_level, 0, max_level))];
    for (int l = 0; l <= max_level; ++l)
        if (utilization * current / freqs_ghz[static_cast<std::size_t>(l)] <= up_threshold) return l;
    return max_level;
}

std::vector<int> ondemand_step(std::span<const double> utilization, std::span<const NodeSpec> nodes,
                               std::span<const int> current_levels, double up_threshold) {
    if (utilization.size() != nodes.size() || current_levels.size() != nodes.size())
        throw std::invalid_argument("ondemand_step: size mismatch");
    std::vector<int> out;
    for (std::size_t n = 0; n < nodes.size(); ++n)
        out.push_back(ondemand_level(utilization[n], nodes[n].freq_levels_ghz, current_levels[n], up_threshold));
    return out;
}

}  // namespace tracedvfs
