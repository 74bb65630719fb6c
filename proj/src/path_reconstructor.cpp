#include "tracedvfs/path_reconstructor.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <string_view>
#include <unordered_map>
#include <utility>

namespace tracedvfs {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct TierIntervals {
    std::vector<Micros> totals;
    bool dangling = false;
};

TierIntervals accumulate_intervals(const std::vector<Activity>& activities, int tier_count) {
    TierIntervals out;
    out.totals.assign(static_cast<std::size_t>(tier_count), 0);
    std::vector<std::optional<Micros>> open(static_cast<std::size_t>(tier_count));
    for (const auto& a : activities) {
        if (a.tier < 0 || a.tier >= tier_count) continue;
        auto& slot = open[static_cast<std::size_t>(a.tier)];
        switch (a.kind) {
            case ActivityKind::Begin:
            case ActivityKind::Receive:
                if (!slot) slot = a.timestamp;
                break;
            case ActivityKind::Send:
            case ActivityKind::End:
                if (slot) {
                    out.totals[static_cast<std::size_t>(a.tier)] += a.timestamp - *slot;
                    slot.reset();
                }
                break;
        }
    }
    for (const auto& slot : open)
        if (slot) out.dangling = true;
    return out;
}

/// Message pairing over the whole log. partner[i] is the index of the
/// matching SEND/RECV of message activity i, or kNone.
struct Matching {
    std::vector<std::size_t> partner;
    std::vector<bool> request_message;
    std::size_t unmatched_sends = 0;
    std::size_t unmatched_receives = 0;
};

Matching match_messages(const ActivityLog& log,
                        const std::unordered_map<std::string_view, std::vector<std::size_t>>& by_context,
                        const std::vector<std::size_t>& position) {
    const auto& acts = log.activities;
    Matching m;
    m.partner.assign(acts.size(), kNone);
    m.request_message.assign(acts.size(), false);

    for (std::size_t i = 0; i < acts.size(); ++i) {
        if (acts[i].kind != ActivityKind::Receive) continue;
        const auto& program = by_context.at(acts[i].context);
        const auto pos = position[i];
        if (pos > 0 && acts[program[pos - 1]].kind == ActivityKind::Begin) m.request_message[i] = true;
    }

    std::unordered_map<std::uint64_t, std::size_t> send_by_id;
    using Channel = std::pair<std::string_view, std::string_view>;
    std::map<Channel, std::deque<std::size_t>> fifo_sends;
    std::map<Channel, std::deque<std::size_t>> fifo_recvs;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const auto& a = acts[i];
        if (a.kind == ActivityKind::Send) {
            if (a.message_id) {
                send_by_id.emplace(*a.message_id, i);
            } else {
                fifo_sends[{a.context, *a.peer_context}].push_back(i);
            }
        } else if (a.kind == ActivityKind::Receive && !m.request_message[i] && !a.message_id) {
            fifo_recvs[{*a.peer_context, a.context}].push_back(i);
        }
    }

    for (std::size_t i = 0; i < acts.size(); ++i) {
        const auto& a = acts[i];
        if (a.kind != ActivityKind::Receive || m.request_message[i] || !a.message_id) continue;
        auto it = send_by_id.find(*a.message_id);
        if (it != send_by_id.end() && m.partner[it->second] == kNone) {
            m.partner[i] = it->second;
            m.partner[it->second] = i;
        }
    }
    for (auto& [channel, recvs] : fifo_recvs) {
        auto sit = fifo_sends.find(channel);
        if (sit == fifo_sends.end()) continue;
        auto& sends = sit->second;
        while (!recvs.empty() && !sends.empty()) {
            m.partner[recvs.front()] = sends.front();
            m.partner[sends.front()] = recvs.front();
            recvs.pop_front();
            sends.pop_front();
        }
    }

    for (std::size_t i = 0; i < acts.size(); ++i) {
        if (m.partner[i] != kNone) continue;
        if (acts[i].kind == ActivityKind::Send) ++m.unmatched_sends;
        if (acts[i].kind == ActivityKind::Receive && !m.request_message[i]) ++m.unmatched_receives;
    }
    return m;
}

struct Segment {
    std::string_view context;
    std::size_t position;        // index into the context's program order
    std::string_view caller;     // empty for the root context
};

}  // namespace

Micros CausalPath::gap_time() const {
    const Micros busy = std::accumulate(tier_service_time.begin(), tier_service_time.end(), Micros{0});
    return server_side_latency - busy;
}

std::vector<const CausalPath*> ReconstructionReport::complete_paths() const {
    std::vector<const CausalPath*> out;
    for (const auto& p : paths)
        if (p.complete) out.push_back(&p);
    return out;
}

ReconstructionReport reconstruct(const ActivityLog& log) {
    const auto& acts = log.activities;
    std::unordered_map<std::string_view, std::vector<std::size_t>> by_context;
    std::vector<std::size_t> position(acts.size());
    for (std::size_t i = 0; i < acts.size(); ++i) {
        auto& program = by_context[acts[i].context];
        position[i] = program.size();
        program.push_back(i);
    }

    const Matching matching = match_messages(log, by_context, position);
    ReconstructionReport report;
    report.unmatched_sends = matching.unmatched_sends;
    report.unmatched_receives = matching.unmatched_receives;

    std::vector<bool> claimed(acts.size(), false);
    std::uint64_t next_id = 0;

    for (std::size_t root = 0; root < acts.size(); ++root) {
        if (acts[root].kind != ActivityKind::Begin || acts[root].tier != 0 || claimed[root]) continue;

        std::vector<std::size_t> members;
        bool ok = true;
        bool ended = false;
        bool structural = false;
        std::optional<std::uint64_t> first_size;

        std::vector<Segment> work{{acts[root].context, position[root], {}}};
        while (!work.empty() && ok) {
            Segment seg = work.back();
            work.pop_back();
            const auto& program = by_context.at(seg.context);
            const bool is_root = seg.caller.empty();
            bool closed = false;
            for (std::size_t p = seg.position; p < program.size() && ok && !closed; ++p) {
                const std::size_t idx = program[p];
                const auto& a = acts[idx];
                if (claimed[idx]) {
                    ok = false;
                    break;
                }
                if (a.kind == ActivityKind::Begin && p != seg.position) {
                    // next request on this context; ours never finished here
                    ok = false;
                    break;
                }
                claimed[idx] = true;
                members.push_back(idx);
                switch (a.kind) {
                    case ActivityKind::Begin:
                        break;
                    case ActivityKind::Receive:
                        if (matching.request_message[idx]) {
                            if (!first_size && a.tier == 0) first_size = a.message_size;
                        } else if (matching.partner[idx] == kNone) {
                            ok = false;
                        } else if (p == seg.position) {
                            // segment opener, already validated by the caller
                        } else if (acts[matching.partner[idx]].timestamp > a.timestamp) {
                            ok = false;
                            structural = true;
                        }
                        break;
                    case ActivityKind::Send: {
                        if (!is_root && *a.peer_context == seg.caller) {
                            closed = true;
                            break;
                        }
                        const std::size_t recv = matching.partner[idx];
                        if (recv == kNone) {
                            ok = false;
                        } else if (acts[recv].timestamp < a.timestamp) {
                            ok = false;
                            structural = true;
                        } else {
                            work.push_back({acts[recv].context, position[recv], a.context});
                        }
                        break;
                    }
                    case ActivityKind::End:
                        if (is_root) {
                            ended = true;
                        } else {
                            ok = false;
                            structural = true;
                        }
                        closed = true;
                        break;
                }
            }
            if (!closed) ok = false;
        }

        std::sort(members.begin(), members.end());
        CausalPath path;
        path.request_id = next_id++;
        path.first_message_size = first_size.value_or(0);
        path.activities.reserve(members.size());
        for (auto idx : members) path.activities.push_back(acts[idx]);
        path.complete = ok && ended && work.empty();
        auto intervals = accumulate_intervals(path.activities, log.tier_count);
        path.tier_service_time = std::move(intervals.totals);
        path.dangling_interval = intervals.dangling;
        if (path.complete) {
            path.server_side_latency = path.activities.back().timestamp - path.activities.front().timestamp;
        } else {
            ++report.incomplete_count;
        }
        if (structural) ++report.structural_errors;
        report.paths.push_back(std::move(path));
    }
    return report;
}

Micros server_side_latency(const CausalPath& path) {
    if (!path.complete || path.activities.empty()) throw PathError("incomplete path has no latency");
    return path.activities.back().timestamp - path.activities.front().timestamp;
}

std::vector<Micros> tier_service_times(const CausalPath& path, int tier_count) {
    return accumulate_intervals(path.activities, tier_count).totals;
}

double service_time_percentage(const CausalPath& path, int tier) {
    const Micros latency = server_side_latency(path);
    if (latency <= 0) throw PathError("degenerate path");
    if (tier < 0 || static_cast<std::size_t>(tier) >= path.tier_service_time.size())
        throw std::out_of_range("tier index");
    return static_cast<double>(path.tier_service_time[static_cast<std::size_t>(tier)]) /
           static_cast<double>(latency);
}

std::vector<double> mean_service_time_percentages(const std::vector<const CausalPath*>& paths,
                                                  int tier_count) {
    std::vector<double> sums(static_cast<std::size_t>(tier_count), 0.0);
    std::size_t n = 0;
    for (const auto* p : paths) {
        if (!p->complete || p->server_side_latency <= 0) continue;
        for (int j = 0; j < tier_count; ++j) sums[static_cast<std::size_t>(j)] += service_time_percentage(*p, j);
        ++n;
    }
    if (n > 0)
        for (auto& s : sums) s /= static_cast<double>(n);
    return sums;
}

}  // namespace tracedvfs
