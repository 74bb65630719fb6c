#include "tracedvfs/pattern_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <tuple>

#include "tracedvfs/csv.hpp"

namespace tracedvfs {

namespace {

int nearest(const std::vector<double>& centroids, double x) {
    auto it = std::lower_bound(centroids.begin(), centroids.end(), x);
    if (it == centroids.begin()) return 0;
    if (it == centroids.end()) return static_cast<int>(centroids.size()) - 1;
    const auto hi = static_cast<int>(it - centroids.begin());
    return (x - centroids[static_cast<std::size_t>(hi - 1)] <= *it - x) ? hi - 1 : hi;
}

std::vector<int> assign(const std::vector<double>& centroids, std::span<const double> values) {
    std::vector<int> labels(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) labels[i] = nearest(centroids, values[i]);
    return labels;
}

/// Recomputes means, drops empty clusters and compacts labels in place.
std::vector<double> update(std::vector<int>& labels, std::span<const double> values, std::size_t k) {
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum[static_cast<std::size_t>(labels[i])] += values[i];
        ++count[static_cast<std::size_t>(labels[i])];
    }
    std::vector<int> remap(k, -1);
    std::vector<double> centroids;
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] == 0) continue;
        remap[c] = static_cast<int>(centroids.size());
        centroids.push_back(sum[c] / static_cast<double>(count[c]));
    }
    for (auto& l : labels) l = remap[static_cast<std::size_t>(l)];
    return centroids;
}

double wcss(const std::vector<double>& centroids, const std::vector<int>& labels,
            std::span<const double> values) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - centroids[static_cast<std::size_t>(labels[i])];
        total += d * d;
    }
    return total;
}

}  // namespace

Clustering kmeans_1d(std::span<const double> values, int k, int max_iterations) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (values.empty()) throw NoPathsError();

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<double> centroids;
    if (distinct.size() <= static_cast<std::size_t>(k)) {
        centroids = distinct;
    } else {
        const auto n = sorted.size();
        for (int i = 0; i < k; ++i) {
            auto pos = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(n) / k);
            centroids.push_back(sorted[std::min(pos, n - 1)]);
        }
        centroids.erase(std::unique(centroids.begin(), centroids.end()), centroids.end());
    }

    Clustering result;
    auto labels = assign(centroids, values);
    for (int it = 0; it < max_iterations; ++it) {
        centroids = update(labels, values, centroids.size());
        result.wcss_history.push_back(wcss(centroids, labels, values));
        ++result.iterations;
        auto next = assign(centroids, values);
        if (next == labels) break;
        labels = std::move(next);
    }
    result.centroids = std::move(centroids);
    result.labels = std::move(labels);
    return result;
}

Clustering classify(std::span<const CausalPath* const> paths, int k) {
    std::vector<double> sizes;
    sizes.reserve(paths.size());
    for (const auto* p : paths)
        if (p->complete) sizes.push_back(static_cast<double>(p->first_message_size));
    if (sizes.empty()) throw NoPathsError();
    return kmeans_1d(sizes, k);
}

double PatternStats::avg_gap_time() const {
    return avg_server_side_latency -
           std::accumulate(avg_tier_service_time.begin(), avg_tier_service_time.end(), 0.0);
}

PatternWindow top_patterns(std::span<const CausalPath* const> paths, int k, int n,
                           const WindowInput& window) {
    if (n < 1) throw std::invalid_argument("N must be >= 1");
    if (window.window_end <= window.window_start) throw std::invalid_argument("empty window");

    std::vector<const CausalPath*> complete;
    for (const auto* p : paths)
        if (p->complete) complete.push_back(p);
    const Clustering clusters = classify(complete, k);

    const auto m = static_cast<std::size_t>(window.tier_count);
    const double seconds = static_cast<double>(window.window_end - window.window_start) / kMicrosPerSecond;
    const double load = static_cast<double>(window.begin_count) / seconds;

    auto blank = [&](std::int64_t id) {
        PatternStats s;
        s.pattern_id = id;
        s.avg_tier_service_time.assign(m, 0.0);
        s.current_load = load;
        return s;
    };

    std::vector<PatternStats> stats(clusters.centroids.size(), blank(0));
    PatternStats aggregate = blank(-1);
    for (std::size_t c = 0; c < stats.size(); ++c) stats[c].first_message_size_centroid = clusters.centroids[c];

    for (std::size_t i = 0; i < complete.size(); ++i) {
        const auto* p = complete[i];
        for (PatternStats* s : {&stats[static_cast<std::size_t>(clusters.labels[i])], &aggregate}) {
            ++s->path_count;
            s->avg_server_side_latency += static_cast<double>(p->server_side_latency);
            for (std::size_t j = 0; j < m && j < p->tier_service_time.size(); ++j)
                s->avg_tier_service_time[j] += static_cast<double>(p->tier_service_time[j]);
        }
        aggregate.first_message_size_centroid += static_cast<double>(p->first_message_size);
    }

    const double total = static_cast<double>(complete.size());
    auto finish = [&](PatternStats& s) {
        const double count = static_cast<double>(s.path_count);
        s.avg_server_side_latency /= count;
        for (auto& v : s.avg_tier_service_time) v /= count;
        s.fraction = count / total;
    };
    for (auto& s : stats) finish(s);
    aggregate.first_message_size_centroid /= total;
    finish(aggregate);

    std::stable_sort(stats.begin(), stats.end(), [](const PatternStats& a, const PatternStats& b) {
        return std::tie(b.fraction, a.first_message_size_centroid) <
               std::tie(a.fraction, b.first_message_size_centroid);
    });

    PatternWindow out;
    out.window_start = window.window_start;
    out.window_end = window.window_end;
    out.total_begin_count = window.begin_count;
    out.cluster_count = stats.size();
    if (stats.size() > static_cast<std::size_t>(n)) stats.resize(static_cast<std::size_t>(n));
    for (std::size_t r = 0; r < stats.size(); ++r) stats[r].pattern_id = static_cast<std::int64_t>(r);
    out.patterns = std::move(stats);
    out.aggregate = std::move(aggregate);
    return out;
}

double estimate_load(const ActivityLog& log, Micros start, Micros end) {
    if (end <= start) throw std::invalid_argument("window must be positive");
    std::size_t count = 0;
    for (const auto& a : log.activities)
        if (a.kind == ActivityKind::Begin && a.timestamp >= start && a.timestamp < end) ++count;
    return static_cast<double>(count) / (static_cast<double>(end - start) / kMicrosPerSecond);
}

std::size_t quantize_load(double rate, std::span<const double> levels) {
    if (levels.empty()) throw std::invalid_argument("no load levels");
    auto it = std::lower_bound(levels.begin(), levels.end(), rate);
    if (it == levels.begin()) return 0;
    if (it == levels.end()) return levels.size() - 1;
    const auto hi = static_cast<std::size_t>(it - levels.begin());
    const double below = rate - levels[hi - 1];
    const double above = levels[hi] - rate;
    return above <= below ? hi : hi - 1;
}

void PatternTracker::seed(std::span<const PatternStats> reference) {
    for (const auto& p : reference) {
        known_.push_back({p.pattern_id, p.first_message_size_centroid});
        next_id_ = std::max(next_id_, p.pattern_id + 1);
    }
}

void PatternTracker::seed(std::span<const double> centroids) {
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        known_.push_back({static_cast<std::int64_t>(i), centroids[i]});
        next_id_ = std::max(next_id_, static_cast<std::int64_t>(i) + 1);
    }
}

void PatternTracker::assign_ids(std::vector<PatternStats>& patterns) {
    struct Pair {
        double distance;
        std::size_t pattern;
        std::size_t known;
    };
    std::vector<Pair> pairs;
    for (std::size_t p = 0; p < patterns.size(); ++p) {
        const double x = patterns[p].first_message_size_centroid;
        for (std::size_t q = 0; q < known_.size(); ++q) {
            const double d = std::abs(x - known_[q].centroid);
            if (d <= tolerance_ * std::max(std::abs(known_[q].centroid), 1.0)) pairs.push_back({d, p, q});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(a.distance, a.pattern, a.known) < std::tie(b.distance, b.pattern, b.known);
    });
    std::vector<bool> pattern_done(patterns.size(), false);
    std::vector<bool> known_used(known_.size(), false);
    for (const auto& pr : pairs) {
        if (pattern_done[pr.pattern] || known_used[pr.known]) continue;
        pattern_done[pr.pattern] = true;
        known_used[pr.known] = true;
        patterns[pr.pattern].pattern_id = known_[pr.known].id;
        known_[pr.known].centroid = patterns[pr.pattern].first_message_size_centroid;
    }
    for (std::size_t p = 0; p < patterns.size(); ++p) {
        if (pattern_done[p]) continue;
        patterns[p].pattern_id = next_id_++;
        known_.push_back({patterns[p].pattern_id, patterns[p].first_message_size_centroid});
    }
}

void write_pattern_csv_header(std::ostream& out, int tier_count) {
    std::vector<std::string> h{"window_start_us", "pattern_id", "first_msg_size", "avg_latency_us"};
    for (int j = 0; j < tier_count; ++j) h.push_back("svc_t" + std::to_string(j) + "_us");
    h.push_back("load_rps");
    h.push_back("fraction");
    write_csv_row(out, h);
}

void write_pattern_csv_rows(std::ostream& out, const PatternWindow& window, int tier_count) {
    for (const auto& p : window.patterns) {
        std::vector<std::string> row{std::to_string(window.window_start), std::to_string(p.pattern_id),
                                     format_number(p.first_message_size_centroid),
                                     format_number(p.avg_server_side_latency)};
        for (int j = 0; j < tier_count; ++j)
            row.push_back(format_number(p.avg_tier_service_time[static_cast<std::size_t>(j)]));
        row.push_back(format_number(p.current_load));
        row.push_back(format_number(p.fraction));
        write_csv_row(out, row);
    }
}

}  // namespace tracedvfs
