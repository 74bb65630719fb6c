#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "tracedvfs/path_reconstructor.hpp"
#include "tracedvfs/trace_model.hpp"

namespace tracedvfs {

class NoPathsError : public std::invalid_argument {
  public:
    NoPathsError() : std::invalid_argument("no paths to classify") {}
};

/// Result of 1-D k-means. Centroids are ascending; labels index into them.
struct Clustering {
    std::vector<double> centroids;
    std::vector<int> labels;
    int iterations = 0;
    /// Within-cluster sum of squares after every assignment step.
    std::vector<double> wcss_history;

    double wcss() const { return wcss_history.empty() ? 0.0 : wcss_history.back(); }
};

/**
 * Deterministic 1-D k-means.
 *
 * Initialisation: when the input has at most k distinct values every
 * distinct value seeds its own cluster; otherwise the seeds are k evenly
 * spaced quantiles of the sorted input. Lloyd iterations stop when no
 * label changes or after 100 rounds. Empty clusters are dropped, so the
 * effective k may shrink. Ties go to the lower centroid.
 */
Clustering kmeans_1d(std::span<const double> values, int k, int max_iterations = 100);

/// k-means on first message size of the complete paths. Throws NoPathsError.
Clustering classify(std::span<const CausalPath* const> paths, int k);

/// Online performance record of one pattern.
struct PatternStats {
    std::int64_t pattern_id = 0;
    double first_message_size_centroid = 0.0;
    double avg_server_side_latency = 0.0;
    std::vector<double> avg_tier_service_time;
    double current_load = 0.0;
    double fraction = 0.0;
    std::size_t path_count = 0;

    double avg_gap_time() const;
};

struct PatternWindow {
    Micros window_start = 0;
    Micros window_end = 0;
    std::vector<PatternStats> patterns;  // top-N, descending fraction
    std::size_t total_begin_count = 0;
    /// All complete paths of the window pooled into one record.
    PatternStats aggregate;
    std::size_t cluster_count = 0;
};

struct WindowInput {
    Micros window_start = 0;
    Micros window_end = 0;
    std::size_t begin_count = 0;
    int tier_count = 1;
};

/**
 * Clusters the paths, builds one PatternStats per cluster and keeps the N
 * largest by fraction (ties: smaller centroid first). Pattern ids are the
 * rank in that order; PatternTracker relabels them across windows.
 */
PatternWindow top_patterns(std::span<const CausalPath* const> paths, int k, int n,
                           const WindowInput& window);

/// BEGIN activities with timestamp in [start, end), per second.
double estimate_load(const ActivityLog& log, Micros start, Micros end);

/// Index of the nearest level; exact midpoints round up, out-of-range clamps.
std::size_t quantize_load(double rate, std::span<const double> levels);

/**
 * Keeps pattern identity stable across windows: each new pattern inherits
 * the id of the nearest known centroid (greedy, closest pairs first) within
 * a relative tolerance; the rest receive fresh ids.
 */
class PatternTracker {
  public:
    struct Known {
        std::int64_t id;
        double centroid;
    };

    explicit PatternTracker(double relative_tolerance = 0.10) : tolerance_(relative_tolerance) {}

    /// Registers reference patterns under their current ids.
    void seed(std::span<const PatternStats> reference);
    /// Registers centroids under ids 0, 1, ...
    void seed(std::span<const double> centroids);
    void assign_ids(std::vector<PatternStats>& patterns);
    const std::vector<Known>& known() const { return known_; }

  private:
    double tolerance_;
    std::vector<Known> known_;
    std::int64_t next_id_ = 0;
};

/// 5-tuple CSV header for M tiers.
void write_pattern_csv_header(std::ostream& out, int tier_count);
void write_pattern_csv_rows(std::ostream& out, const PatternWindow& window, int tier_count);

}  // namespace tracedvfs
