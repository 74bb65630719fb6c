#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tracedvfs/pattern_analyzer.hpp"
#include "tracedvfs/perf_model.hpp"

namespace tracedvfs {

/// Latency band [lp * th[i], up * th[i]] per pattern id i.
struct ThresholdZone {
    std::vector<double> th;
    double up = 1.2;
    double lp = 0.8;

    void validate() const;
};

struct ControllerObservation {
    /// Pattern ids index into the zone's th; ids outside it are ignored.
    PatternWindow window;
    std::vector<double> per_node_utilization;
    FrequencyVector current_freq;
    std::vector<int> max_level;  // per tier
    int period_index = 0;
};

enum class Direction { Up, Down, Hold };

enum class Reason {
    Violation,       // some pattern above up * th
    Slack,           // every pattern below lp * th
    InZone,
    AtBoundary,      // wanted to move but every candidate tier is clamped
    NoData,
    FastModulation,
    Governor,        // ondemand
};

std::string_view to_token(Direction d);
std::string_view to_token(Reason r);

struct ControlDecision {
    FrequencyVector new_freq;
    std::optional<int> changed_tier;
    Direction direction = Direction::Hold;
    Reason reason = Reason::InZone;
};

/// Per-pattern step law. Up: worst relative violator, its largest-service
/// tier that is not at max. Down: smallest fraction-weighted service tier
/// that is not at min. Otherwise hold.
ControlDecision powertracer_step(const ControllerObservation& obs, const ThresholdZone& zone);

/// Same law on the pooled all-paths record against th[0].
ControlDecision powertracer_np_step(const ControllerObservation& obs, const ThresholdZone& zone);

/// Average latency against th[0]; moves the most utilized tier up or the
/// least utilized tier down.
ControlDecision simpledvs_step(const ControllerObservation& obs, const ThresholdZone& zone);

/// Kernel ondemand rule for one node: above up_threshold jump to max,
/// otherwise the lowest level whose projected utilization stays at or
/// below up_threshold.
int ondemand_level(double utilization, std::span<const double> freqs_ghz, int current_level,
                   double up_threshold = 0.80);

std::vector<int> ondemand_step(std::span<const double> utilization, std::span<const NodeSpec> nodes,
                               std::span<const int> current_levels, double up_threshold = 0.80);

}  // namespace tracedvfs
