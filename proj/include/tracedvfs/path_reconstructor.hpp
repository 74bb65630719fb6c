#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tracedvfs/trace_model.hpp"

namespace tracedvfs {

/**
 * Activities of one request, ordered as in the source log.
 *
 * tier_service_time[j] accumulates the intervals a request spends on tier j,
 * each opened by BEGIN/RECV and closed by the next SEND/END on that tier.
 * Whatever is left of server_side_latency is network gap time.
 */
struct CausalPath {
    std::vector<Activity> activities;
    std::uint64_t request_id = 0;
    std::uint64_t first_message_size = 0;
    Micros server_side_latency = 0;
    std::vector<Micros> tier_service_time;
    bool complete = false;
    bool dangling_interval = false;

    Micros gap_time() const;
};

struct ReconstructionReport {
    std::vector<CausalPath> paths;
    std::size_t incomplete_count = 0;
    std::size_t unmatched_sends = 0;
    std::size_t unmatched_receives = 0;
    std::size_t structural_errors = 0;

    std::vector<const CausalPath*> complete_paths() const;
};

class PathError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/**
 * Rebuilds causal paths from an interleaved log.
 *
 * Messages are paired by message id when both sides carry one, otherwise
 * FIFO per ordered (sender, receiver) context channel. A path starts at a
 * tier-0 BEGIN and follows program order within each context plus message
 * edges to callees. A callee context leaves the path at the SEND back to the
 * context that called it; the root context leaves at END. The RECV directly
 * after a BEGIN is the client request and needs no partner.
 */
ReconstructionReport reconstruct(const ActivityLog& log);

/// END - BEGIN. Throws PathError for incomplete paths.
Micros server_side_latency(const CausalPath& path);

std::vector<Micros> tier_service_times(const CausalPath& path, int tier_count);

/// Throws PathError for incomplete paths and zero latency.
double service_time_percentage(const CausalPath& path, int tier);

/// Per-tier mean of per-path service time percentages over complete paths
/// with positive latency.
std::vector<double> mean_service_time_percentages(const std::vector<const CausalPath*>& paths,
                                                  int tier_count);

}  // namespace tracedvfs
