#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "tracedvfs/cluster_sim.hpp"
#include "tracedvfs/controllers.hpp"
#include "tracedvfs/pattern_analyzer.hpp"
#include "tracedvfs/perf_model.hpp"

namespace tracedvfs {

enum class ControllerKind { Baseline, PowerTracer, PowerTracerNP, SimpleDVS, Ondemand };

std::string_view to_token(ControllerKind kind);
/// Throws ConfigError listing the valid names.
ControllerKind parse_controller(std::string_view name);
bool needs_model(ControllerKind kind);

struct ControlSchedule {
    Micros sampling_period = kMicrosPerSecond;
    Micros sampling_interval = 5 * kMicrosPerSecond;
    Micros control_period = kMicrosPerSecond;
    /// How far before a window the log slice reaches, so paths that end in
    /// the window can be rebuilt from their BEGIN.
    Micros lookback = 10 * kMicrosPerSecond;
};

/**
 * Quantized load level with hysteresis. The first estimate sets the level.
 * Afterwards a new level is taken only when `confirm` consecutive estimates
 * quantize to the same other level and each is at least `margin` of the way
 * from the current level to it.
 */
class LoadLevelTracker {
  public:
    explicit LoadLevelTracker(std::vector<double> levels, int confirm = 3, double margin = 0.75);

    /// Returns true when the level changes, including the first call.
    bool update(double rate);
    std::size_t level() const { return level_; }
    bool initialized() const { return initialized_; }

  private:
    std::vector<double> levels_;
    int confirm_;
    double margin_;
    bool initialized_ = false;
    std::size_t level_ = 0;
    std::size_t pending_ = 0;
    int streak_ = 0;
};

struct DecisionRecord {
    Micros t = 0;
    ControllerKind controller = ControllerKind::Baseline;
    Direction direction = Direction::Hold;
    Reason reason = Reason::InZone;
    std::optional<int> tier;
    int old_level = 0;
    int new_level = 0;
    FrequencyVector freq_after;
    /// Measured latency per tracked pattern (or the pooled average).
    std::vector<std::optional<double>> d;
};

void write_decision_csv(std::ostream& out, const std::vector<DecisionRecord>& records, int latency_columns);

struct LoopSettings {
    ControllerKind kind = ControllerKind::PowerTracer;
    ThresholdZone zone;
    int k = 10;
    /// Seeds pattern identity; index i is threshold i.
    std::vector<double> pattern_centroids;
    const PerformanceModel* model = nullptr;
    ControlSchedule schedule;
    /// Windows must lie inside [active_from, active_until].
    Micros active_from = 0;
    Micros active_until = std::numeric_limits<Micros>::max();
    int level_confirm = 3;
    double level_margin = 0.75;
};

/// Sampling window, observation, decision and actuation once per sampling
/// interval, for the PowerTracer family and SimpleDVS.
class ControlLoop : public ControlHook {
  public:
    explicit ControlLoop(LoopSettings settings);

    Micros period() const override { return settings_.schedule.sampling_interval; }
    void on_tick(Simulator& sim) override;

    const std::vector<DecisionRecord>& decisions() const { return decisions_; }
    std::size_t observation_count() const { return observations_; }
    std::size_t fast_modulation_count() const { return fast_modulations_; }
    int latency_columns() const;

  private:
    ControllerObservation observe(Simulator& sim, Micros t);
    void record(Simulator& sim, Micros t, const ControlDecision& d, const ControllerObservation& obs,
                const FrequencyVector& before);

    LoopSettings settings_;
    PatternTracker tracker_;
    std::optional<LoadLevelTracker> load_tracker_;
    std::vector<DecisionRecord> decisions_;
    std::size_t observations_ = 0;
    std::size_t fast_modulations_ = 0;
};

/// Per-node ondemand governor sampling per-slot busy time.
class OndemandGovernor : public ControlHook {
  public:
    explicit OndemandGovernor(Micros sampling_period = 10'000, double up_threshold = 0.80);

    Micros period() const override { return period_; }
    void on_tick(Simulator& sim) override;
    const std::vector<DecisionRecord>& decisions() const { return decisions_; }

  private:
    Micros period_;
    double up_threshold_;
    std::vector<std::vector<double>> last_busy_;
    std::vector<DecisionRecord> decisions_;
};

}  // namespace tracedvfs
