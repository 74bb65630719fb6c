#include "tracedvfs/cluster_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>

#include "tracedvfs/csv.hpp"
#include "tracedvfs/rng.hpp"

namespace tracedvfs {

double node_power(const PowerParams& power, double freq_ghz, double max_freq_ghz, double utilization) {
    return power.p_idle_w + power.p_dyn_max_w * utilization * std::pow(freq_ghz / max_freq_ghz, power.alpha);
}

double full_load_power(std::span<const NodeSpec> nodes, std::span<const int> levels) {
    double total = 0.0;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const auto& node = nodes[n];
        total += node_power(node.power, node.freq_levels_ghz[static_cast<std::size_t>(levels[n])],
                            node.max_freq(), 1.0);
    }
    return total;
}

double max_power_saving(std::span<const NodeSpec> nodes) {
    std::vector<int> lo(nodes.size(), 0);
    std::vector<int> hi;
    for (const auto& n : nodes) hi.push_back(n.max_level());
    const double p_max = full_load_power(nodes, hi);
    return (p_max - full_load_power(nodes, lo)) / p_max;
}

Micros WorkloadSpec::runtime_start() const {
    return static_cast<Micros>(std::llround(up_ramp_s * kMicrosPerSecond));
}

Micros WorkloadSpec::runtime_end() const {
    return runtime_start() + static_cast<Micros>(std::llround(runtime_s * kMicrosPerSecond));
}

Micros WorkloadSpec::total_duration() const {
    return runtime_end() + static_cast<Micros>(std::llround(down_ramp_s * kMicrosPerSecond));
}

void validate(const WorkloadSpec& w, int tier_count) {
    if (w.classes.empty()) throw ConfigError("workload has no request classes");
    if (w.transition.size() != w.classes.size()) throw ConfigError("transition table must be square over classes");
    for (std::size_t r = 0; r < w.transition.size(); ++r) {
        const auto& row = w.transition[r];
        if (row.size() != w.classes.size()) throw ConfigError("transition table must be square over classes");
        double sum = 0.0;
        for (double p : row) {
            if (p < 0.0) throw ConfigError("negative transition probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError("transition row " + std::to_string(r) + " sums to " + format_number(sum));
    }
    if (w.initial_class < -1 || w.initial_class >= static_cast<int>(w.classes.size()))
        throw ConfigError("initial class out of range");
    if (w.client_count < 0) throw ConfigError("negative client count");
    if (w.think_time_mean < 0) throw ConfigError("negative think time");
    if (w.demand_cv < 0.0) throw ConfigError("negative demand cv");
    if (w.up_ramp_s < 0 || w.runtime_s <= 0 || w.down_ramp_s < 0) throw ConfigError("bad phase durations");
    for (const auto& step : w.load_steps)
        if (step.clients < 0 || step.at < 0) throw ConfigError("bad load step");
    for (const auto& c : w.classes) {
        if (c.hops.empty() || c.hops.front().tier != 0) throw ConfigError("class " + c.name + ": first hop must be tier 0");
        for (std::size_t h = 0; h < c.hops.size(); ++h) {
            const auto& hop = c.hops[h];
            if (hop.cycles < 0) throw ConfigError("class " + c.name + ": negative cycles");
            if (hop.tier >= tier_count) throw ConfigError("class " + c.name + ": tier out of range");
            if (h > 0 && (hop.tier < 1 || hop.tier > c.hops[h - 1].tier + 1))
                throw ConfigError("class " + c.name + ": hops are not a call sequence");
        }
    }
}

std::vector<double> stationary_mix(const WorkloadSpec& w) {
    const auto n = w.transition.size();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 10000; ++it) {
        std::vector<double> next(n, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) next[c] += pi[r] * w.transition[r][c];
        double delta = 0.0;
        for (std::size_t c = 0; c < n; ++c) delta += std::abs(next[c] - pi[c]);
        pi = std::move(next);
        if (delta < 1e-15) break;
    }
    return pi;
}

std::vector<std::vector<double>> transition_table_for(std::span<const double> mix, double locality) {
    const auto n = mix.size();
    std::vector<std::vector<double>> table(n, std::vector<double>(n, 0.0));
    for (std::size_t s = 0; s < n; ++s) {
        double stay = 1.0;
        if (n > 1) {
            for (std::size_t t : {(s + 1) % n, (s + n - 1) % n}) {
                if (t == s) continue;
                const double move = 0.5 * std::min(1.0, mix[t] / mix[s]);
                table[s][t] += locality * move;
                stay -= move;
            }
        }
        table[s][s] += locality * stay;
        for (std::size_t t = 0; t < n; ++t) table[s][t] += (1.0 - locality) * mix[t];
        const double sum = std::accumulate(table[s].begin(), table[s].end(), 0.0);
        for (auto& p : table[s]) p /= sum;
    }
    return table;
}

void validate(const SimConfig& config) {
    if (config.nodes.empty()) throw ConfigError("no nodes");
    for (const auto& node : config.nodes) {
        if (node.freq_levels_ghz.empty()) throw ConfigError("node " + node.name + " has no frequency levels");
        for (std::size_t i = 0; i < node.freq_levels_ghz.size(); ++i) {
            if (node.freq_levels_ghz[i] <= 0) throw ConfigError("node " + node.name + ": frequency must be positive");
            if (i > 0 && node.freq_levels_ghz[i] <= node.freq_levels_ghz[i - 1])
                throw ConfigError("node " + node.name + ": frequencies must be strictly increasing");
        }
        if (node.server_count < 1) throw ConfigError("node " + node.name + ": server_count must be >= 1");
        if (node.power.p_idle_w < 0 || node.power.p_dyn_max_w < 0 || node.power.alpha < 0)
            throw ConfigError("node " + node.name + ": bad power parameters");
    }
    if (config.network_latency < 0) throw ConfigError("negative network latency");
    if (config.deadline <= 0) throw ConfigError("deadline must be positive");
    if (!config.initial_levels.empty()) {
        if (config.initial_levels.size() != config.nodes.size()) throw ConfigError("initial_levels size mismatch");
        for (std::size_t n = 0; n < config.nodes.size(); ++n)
            if (config.initial_levels[n] < 0 || config.initial_levels[n] > config.nodes[n].max_level())
                throw ConfigError("initial level out of range");
    }
    validate(config.workload, static_cast<int>(config.nodes.size()));
}

void UtilizationTrace::record(Micros t, int busy) {
    if (!times_.empty() && times_.back() == t) {
        busy_.back() = busy;
        return;
    }
    times_.push_back(t);
    busy_.push_back(busy);
}

double UtilizationTrace::busy_time(Micros from, Micros to) const {
    if (to <= from || times_.empty()) return 0.0;
    auto it = std::upper_bound(times_.begin(), times_.end(), from);
    std::size_t i = (it == times_.begin()) ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    double total = 0.0;
    Micros cursor = std::max(from, times_[i]);
    for (; i < times_.size() && cursor < to; ++i) {
        const Micros seg_end = (i + 1 < times_.size()) ? std::min(times_[i + 1], to) : to;
        if (seg_end > cursor) total += static_cast<double>(busy_[i]) * static_cast<double>(seg_end - cursor);
        cursor = std::max(cursor, seg_end);
    }
    return total;
}

std::vector<const RequestRecord*> SimResult::runtime_requests() const {
    std::vector<const RequestRecord*> out;
    for (const auto& r : requests)
        if (r.completed() && r.begin >= runtime_start && r.begin < runtime_end) out.push_back(&r);
    return out;
}

double measure_utilization(const SimResult& result, int node, Micros from, Micros to) {
    if (to <= from) return 0.0;
    const auto n = static_cast<std::size_t>(node);
    return result.busy_traces.at(n).busy_time(from, to) /
           (static_cast<double>(result.server_counts.at(n)) * static_cast<double>(to - from));
}

// ---------------------------------------------------------------------------

namespace {

enum class EventType { ClientIssue, Arrive, ReplyArrive, JobDone, ClientReply, Tick, LoadStep };

struct Event {
    Micros t;
    std::uint64_t seq;
    EventType type;
    int a;
    int b;
    std::uint64_t msg;
};

struct EventLater {
    bool operator()(const Event& x, const Event& y) const {
        return x.t != y.t ? x.t > y.t : x.seq > y.seq;
    }
};

struct ClassPlan {
    std::vector<std::vector<int>> children;  // per hop
    std::vector<int> parent;
};

struct Visit {
    int request = 0;
    int hop = 0;
    int tier = 0;
    int thread = 0;
    int parent = -1;
    std::size_t next_child = 0;
    int segments = 1;
    Micros segment_start = 0;
    std::uint64_t incoming_msg = 0;
};

struct Client {
    Rng rng;
    int state = -1;
    bool in_request = false;
    bool dormant = true;
};

struct Node {
    int level = 0;
    int busy = 0;
    std::vector<Micros> slot_since;  // -1 when idle
    std::vector<double> slot_total;
    std::vector<double> slot_ghz;     // frequency of the job in each slot, 0 when idle
    std::deque<int> queue;            // visits waiting for a CPU slot
    std::priority_queue<int, std::vector<int>, std::greater<>> free_threads;
    int next_thread = 0;
    Micros last_t = 0;
};

}  // namespace

struct Simulator::Impl {
    SimConfig cfg;
    int tiers;
    Micros now = 0;
    Micros duration;
    std::uint64_t seq = 0;
    std::uint64_t next_msg = 1;
    std::priority_queue<Event, std::vector<Event>, EventLater> events;
    std::vector<ClassPlan> plans;
    std::vector<double> initial_mix;
    std::vector<Client> clients;
    std::vector<Node> nodes;
    std::vector<Visit> visits;
    std::vector<std::vector<double>> request_cycles;  // per request, per hop
    std::vector<int> request_visit_root;
    int active = 0;
    bool ran = false;

    SimResult result;
    std::vector<std::vector<double>> bucket_energy;  // [bucket][node] joules
    std::vector<std::vector<double>> bucket_busy;    // [bucket][node] slot-us

    explicit Impl(SimConfig c) : cfg(std::move(c)) {
        validate(cfg);
        tiers = static_cast<int>(cfg.nodes.size());
        duration = cfg.workload.total_duration();
        initial_mix = stationary_mix(cfg.workload);
        for (const auto& cls : cfg.workload.classes) {
            ClassPlan plan;
            plan.children.resize(cls.hops.size());
            plan.parent.assign(cls.hops.size(), -1);
            std::vector<int> last_on_tier(static_cast<std::size_t>(tiers), -1);
            for (std::size_t h = 0; h < cls.hops.size(); ++h) {
                const int tier = cls.hops[h].tier;
                if (h > 0) {
                    const int parent = last_on_tier[static_cast<std::size_t>(tier - 1)];
                    plan.parent[h] = parent;
                    plan.children[static_cast<std::size_t>(parent)].push_back(static_cast<int>(h));
                }
                last_on_tier[static_cast<std::size_t>(tier)] = static_cast<int>(h);
                for (int deeper = tier + 1; deeper < tiers; ++deeper) last_on_tier[static_cast<std::size_t>(deeper)] = -1;
            }
            plans.push_back(std::move(plan));
        }
        nodes.resize(cfg.nodes.size());
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            auto& node = nodes[n];
            node.level = cfg.initial_levels.empty() ? cfg.nodes[n].max_level() : cfg.initial_levels[n];
            node.slot_since.assign(static_cast<std::size_t>(cfg.nodes[n].server_count), -1);
            node.slot_total.assign(static_cast<std::size_t>(cfg.nodes[n].server_count), 0.0);
            node.slot_ghz.assign(static_cast<std::size_t>(cfg.nodes[n].server_count), 0.0);
        }
        const auto buckets = static_cast<std::size_t>((duration + kMicrosPerSecond - 1) / kMicrosPerSecond);
        bucket_energy.assign(buckets, std::vector<double>(nodes.size(), 0.0));
        bucket_busy.assign(buckets, std::vector<double>(nodes.size(), 0.0));
        result.busy_traces.resize(nodes.size());
        for (std::size_t n = 0; n < nodes.size(); ++n) result.busy_traces[n].record(0, 0);
        result.activity_log.tier_count = tiers;
        result.runtime_start = cfg.workload.runtime_start();
        result.runtime_end = cfg.workload.runtime_end();
        result.duration = duration;
        result.deadline = cfg.deadline;
        for (const auto& n : cfg.nodes) result.server_counts.push_back(n.server_count);
    }

    void schedule(Micros t, EventType type, int a = 0, int b = 0, std::uint64_t msg = 0) {
        events.push(Event{t, seq++, type, a, b, msg});
    }

    /// A job keeps the frequency it started at, so each busy slot is charged
    /// at its own job's frequency. With all jobs at the node frequency this is node_power.
    double power_now(std::size_t n) const {
        const auto& spec = cfg.nodes[n];
        double watts = spec.power.p_idle_w;
        for (double ghz : nodes[n].slot_ghz)
            if (ghz > 0.0) watts += node_power(PowerParams{0.0, spec.power.p_dyn_max_w, spec.power.alpha}, ghz,
                                               spec.max_freq(), 1.0 / spec.server_count);
        return watts;
    }

    /// Integrates power and busy time of node n from its last change to `to`.
    void integrate(std::size_t n, Micros to) {
        auto& node = nodes[n];
        Micros t0 = node.last_t;
        if (to <= t0) return;
        const double watts = power_now(n);
        const double busy = node.busy;
        const Micros rs = result.runtime_start;
        const Micros re = result.runtime_end;
        const Micros lo = std::max(t0, rs);
        const Micros hi = std::min(to, re);
        if (hi > lo) result.runtime_energy_j += watts * static_cast<double>(hi - lo) / kMicrosPerSecond;
        result.total_energy_j += watts * static_cast<double>(to - t0) / kMicrosPerSecond;
        while (t0 < to) {
            const auto b = static_cast<std::size_t>(t0 / kMicrosPerSecond);
            const Micros bend = std::min<Micros>(to, static_cast<Micros>(b + 1) * kMicrosPerSecond);
            if (b < bucket_energy.size()) {
                bucket_energy[b][n] += watts * static_cast<double>(bend - t0) / kMicrosPerSecond;
                bucket_busy[b][n] += busy * static_cast<double>(bend - t0);
            }
            t0 = bend;
        }
        node.last_t = to;
    }

    std::string thread_context(int tier, int thread) const {
        return "t" + std::to_string(tier) + ".w" + std::to_string(thread);
    }

    int allocate_thread(int tier) {
        auto& node = nodes[static_cast<std::size_t>(tier)];
        if (!node.free_threads.empty()) {
            const int t = node.free_threads.top();
            node.free_threads.pop();
            return t;
        }
        return node.next_thread++;
    }

    void release_thread(int tier, int thread) { nodes[static_cast<std::size_t>(tier)].free_threads.push(thread); }

    void emit(ActivityKind kind, const Visit& v, std::optional<std::string> peer = std::nullopt,
              std::optional<std::uint64_t> msg = std::nullopt, std::optional<std::uint64_t> size = std::nullopt) {
        Activity a;
        a.timestamp = now;
        a.kind = kind;
        a.tier = v.tier;
        a.context = thread_context(v.tier, v.thread);
        a.peer_context = std::move(peer);
        a.message_id = msg;
        a.message_size = size;
        a.request_hint = static_cast<std::uint64_t>(v.request);
        result.activity_log.activities.push_back(std::move(a));
    }

    void close_segment(Visit& v) {
        auto& rec = result.requests[static_cast<std::size_t>(v.request)];
        rec.tier_busy[static_cast<std::size_t>(v.tier)] += now - v.segment_start;
        rec.intervals.push_back({v.tier, v.segment_start, now});
    }

    void enqueue(int visit) {
        const auto n = static_cast<std::size_t>(visits[static_cast<std::size_t>(visit)].tier);
        nodes[n].queue.push_back(visit);
        dispatch(n);
    }

    void dispatch(std::size_t n) {
        auto& node = nodes[n];
        const auto& spec = cfg.nodes[n];
        while (!node.queue.empty() && node.busy < spec.server_count) {
            const int visit = node.queue.front();
            node.queue.pop_front();
            std::size_t slot = 0;
            while (node.slot_since[slot] >= 0) ++slot;
            integrate(n, now);
            ++node.busy;
            result.busy_traces[n].record(now, node.busy);
            node.slot_since[slot] = now;
            const auto& v = visits[static_cast<std::size_t>(visit)];
            const double cycles = request_cycles[static_cast<std::size_t>(v.request)][static_cast<std::size_t>(v.hop)] /
                                  static_cast<double>(v.segments);
            const double ghz = spec.freq_levels_ghz[static_cast<std::size_t>(node.level)];
            node.slot_ghz[slot] = ghz;
            const auto service = static_cast<Micros>(std::llround(cycles / (ghz * 1e3)));
            schedule(now + service, EventType::JobDone, visit, static_cast<int>(slot));
        }
    }

    int draw_class(Client& client) {
        const auto& w = cfg.workload;
        if (client.state < 0 && w.initial_class >= 0) {
            client.state = w.initial_class;
            return client.state;
        }
        const auto& row = client.state < 0 ? initial_mix : w.transition[static_cast<std::size_t>(client.state)];
        const double u = client.rng.uniform();
        double acc = 0.0;
        int pick = static_cast<int>(row.size()) - 1;
        for (std::size_t c = 0; c < row.size(); ++c) {
            acc += row[c];
            if (u < acc) {
                pick = static_cast<int>(c);
                break;
            }
        }
        client.state = pick;
        return pick;
    }

    Micros draw_think(Client& client) {
        const double mean = static_cast<double>(cfg.workload.think_time_mean);
        return static_cast<Micros>(std::llround(client.rng.exponential(mean)));
    }

    void on_client_issue(int c) {
        auto& client = clients[static_cast<std::size_t>(c)];
        if (c >= active) {
            client.dormant = true;
            return;
        }
        const int cls = draw_class(client);
        const auto& spec = cfg.workload.classes[static_cast<std::size_t>(cls)];
        std::vector<double> cycles;
        cycles.reserve(spec.hops.size());
        for (const auto& hop : spec.hops) {
            double mult = 1.0;
            if (cfg.workload.demand_cv > 0.0) mult = client.rng.lognormal_unit_mean(cfg.workload.demand_cv);
            cycles.push_back(hop.cycles * mult);
        }
        const int id = static_cast<int>(result.requests.size());
        RequestRecord rec;
        rec.id = static_cast<std::uint64_t>(id);
        rec.client = c;
        rec.class_index = cls;
        rec.tier_busy.assign(static_cast<std::size_t>(tiers), 0);
        result.requests.push_back(std::move(rec));
        request_cycles.push_back(std::move(cycles));

        Visit root;
        root.request = id;
        root.hop = 0;
        root.tier = 0;
        root.segments = static_cast<int>(plans[static_cast<std::size_t>(cls)].children[0].size()) + 1;
        visits.push_back(root);
        client.in_request = true;
        client.dormant = false;
        schedule(now + cfg.network_latency, EventType::Arrive, static_cast<int>(visits.size()) - 1, c);
    }

    void on_arrive(int vi, int client) {
        auto& v = visits[static_cast<std::size_t>(vi)];
        v.segment_start = now;
        const auto& rec = result.requests[static_cast<std::size_t>(v.request)];
        const auto& cls = cfg.workload.classes[static_cast<std::size_t>(rec.class_index)];
        if (v.parent < 0) {
            v.thread = allocate_thread(0);
            result.requests[static_cast<std::size_t>(v.request)].begin = now;
            emit(ActivityKind::Begin, v);
            emit(ActivityKind::Receive, v, "client" + std::to_string(client), next_msg++, cls.request_size);
        } else {
            const auto& parent = visits[static_cast<std::size_t>(v.parent)];
            emit(ActivityKind::Receive, v, thread_context(parent.tier, parent.thread), v.incoming_msg, cls.call_size);
        }
        enqueue(vi);
    }

    void on_reply_arrive(int vi, int child, std::uint64_t msg) {
        auto& v = visits[static_cast<std::size_t>(vi)];
        const auto& c = visits[static_cast<std::size_t>(child)];
        const auto& cls = cfg.workload.classes[static_cast<std::size_t>(result.requests[static_cast<std::size_t>(v.request)].class_index)];
        v.segment_start = now;
        emit(ActivityKind::Receive, v, thread_context(c.tier, c.thread), msg, cls.reply_size);
        enqueue(vi);
    }

    void on_job_done(int vi, int slot) {
        const auto n = static_cast<std::size_t>(visits[static_cast<std::size_t>(vi)].tier);
        auto& node = nodes[n];
        integrate(n, now);
        --node.busy;
        result.busy_traces[n].record(now, node.busy);
        node.slot_total[static_cast<std::size_t>(slot)] += static_cast<double>(now - node.slot_since[static_cast<std::size_t>(slot)]);
        node.slot_since[static_cast<std::size_t>(slot)] = -1;
        node.slot_ghz[static_cast<std::size_t>(slot)] = 0.0;
        dispatch(n);

        Visit& v = visits[static_cast<std::size_t>(vi)];
        const auto& rec = result.requests[static_cast<std::size_t>(v.request)];
        const auto cls_index = static_cast<std::size_t>(rec.class_index);
        const auto& cls = cfg.workload.classes[cls_index];
        const auto& children = plans[cls_index].children[static_cast<std::size_t>(v.hop)];
        close_segment(v);

        if (v.next_child < children.size()) {
            const int hop = children[v.next_child++];
            Visit child;
            child.request = v.request;
            child.hop = hop;
            child.tier = cls.hops[static_cast<std::size_t>(hop)].tier;
            child.parent = vi;
            child.segments = static_cast<int>(plans[cls_index].children[static_cast<std::size_t>(hop)].size()) + 1;
            child.thread = allocate_thread(child.tier);
            child.incoming_msg = next_msg++;
            const std::string child_ctx = thread_context(child.tier, child.thread);
            const std::uint64_t msg = child.incoming_msg;
            visits.push_back(child);
            emit(ActivityKind::Send, visits[static_cast<std::size_t>(vi)], child_ctx, msg, cls.call_size);
            schedule(now + cfg.network_latency, EventType::Arrive, static_cast<int>(visits.size()) - 1, 0);
            return;
        }

        if (v.parent < 0) {
            emit(ActivityKind::End, v);
            result.requests[static_cast<std::size_t>(v.request)].end = now;
            release_thread(0, v.thread);
            schedule(now + cfg.network_latency, EventType::ClientReply, rec.client);
            return;
        }
        const auto& parent = visits[static_cast<std::size_t>(v.parent)];
        const std::uint64_t msg = next_msg++;
        emit(ActivityKind::Send, v, thread_context(parent.tier, parent.thread), msg, cls.reply_size);
        release_thread(v.tier, v.thread);
        schedule(now + cfg.network_latency, EventType::ReplyArrive, v.parent, vi, msg);
    }

    void on_client_reply(int c) {
        auto& client = clients[static_cast<std::size_t>(c)];
        client.in_request = false;
        if (c >= active) {
            client.dormant = true;
            return;
        }
        schedule(now + draw_think(client), EventType::ClientIssue, c);
    }

    void activate(int count) {
        const int old = active;
        active = count;
        for (int c = old; c < count; ++c) {
            auto& client = clients[static_cast<std::size_t>(c)];
            if (client.dormant && !client.in_request) {
                client.dormant = false;
                schedule(now + draw_think(client), EventType::ClientIssue, c);
            }
        }
    }

    SimResult run(Simulator& self, std::span<ControlHook* const> hooks) {
        if (ran) throw std::logic_error("simulator already ran");
        ran = true;
        const auto& w = cfg.workload;
        int max_clients = w.client_count;
        for (const auto& s : w.load_steps) max_clients = std::max(max_clients, s.clients);
        clients.reserve(static_cast<std::size_t>(max_clients));
        for (int c = 0; c < max_clients; ++c) {
            std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                              static_cast<std::uint32_t>(c), 0x51ed2701u};
            clients.push_back(Client{Rng(seq), -1, false, true});
        }
        active = w.client_count;
        for (int c = 0; c < active; ++c) {
            auto& client = clients[static_cast<std::size_t>(c)];
            client.dormant = false;
            const Micros stagger = w.client_count > 0
                                       ? static_cast<Micros>(std::llround(w.up_ramp_s * kMicrosPerSecond * c / w.client_count))
                                       : 0;
            schedule(stagger + draw_think(client), EventType::ClientIssue, c);
        }
        for (std::size_t s = 0; s < w.load_steps.size(); ++s)
            schedule(w.load_steps[s].at, EventType::LoadStep, static_cast<int>(s));
        for (std::size_t h = 0; h < hooks.size(); ++h) {
            if (hooks[h]->period() <= 0) throw ConfigError("hook period must be positive");
            schedule(hooks[h]->period(), EventType::Tick, static_cast<int>(h));
        }

        while (!events.empty() && events.top().t <= duration) {
            const Event e = events.top();
            events.pop();
            now = e.t;
            switch (e.type) {
                case EventType::ClientIssue: on_client_issue(e.a); break;
                case EventType::Arrive: on_arrive(e.a, e.b); break;
                case EventType::ReplyArrive: on_reply_arrive(e.a, e.b, e.msg); break;
                case EventType::JobDone: on_job_done(e.a, e.b); break;
                case EventType::ClientReply: on_client_reply(e.a); break;
                case EventType::LoadStep: activate(w.load_steps[static_cast<std::size_t>(e.a)].clients); break;
                case EventType::Tick: {
                    auto* hook = hooks[static_cast<std::size_t>(e.a)];
                    hook->on_tick(self);
                    schedule(now + hook->period(), EventType::Tick, e.a);
                    break;
                }
            }
        }
        now = duration;
        for (std::size_t n = 0; n < nodes.size(); ++n) integrate(n, duration);
        finish();
        return std::move(result);
    }

    void finish() {
        for (std::size_t b = 0; b < bucket_energy.size(); ++b) {
            PowerSample sample;
            sample.t = static_cast<Micros>(b) * kMicrosPerSecond;
            const Micros width = std::min<Micros>(kMicrosPerSecond, duration - sample.t);
            std::vector<double> util;
            for (std::size_t n = 0; n < nodes.size(); ++n) {
                const double watts = bucket_energy[b][n] * kMicrosPerSecond / static_cast<double>(width);
                sample.node_watts.push_back(watts);
                sample.total_watts += watts;
                util.push_back(bucket_busy[b][n] / (cfg.nodes[n].server_count * static_cast<double>(width)));
            }
            result.power_trace.push_back(std::move(sample));
            result.utilization.push_back(std::move(util));
        }
        auto& s = result.summary;
        const auto runtime = result.runtime_requests();
        s.requests = runtime.size();
        std::size_t misses = 0;
        double latency_sum = 0.0;
        for (const auto* r : runtime) {
            latency_sum += static_cast<double>(r->latency());
            if (r->latency() > cfg.deadline) ++misses;
        }
        const double runtime_s = static_cast<double>(result.runtime_end - result.runtime_start) / kMicrosPerSecond;
        if (!runtime.empty()) {
            s.mean_latency_us = latency_sum / static_cast<double>(runtime.size());
            s.miss_ratio = static_cast<double>(misses) / static_cast<double>(runtime.size());
        }
        s.mean_power_w = result.runtime_energy_j / runtime_s;
        s.throughput_rps = static_cast<double>(runtime.size()) / runtime_s;
    }
};

Simulator::Simulator(SimConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
Simulator::~Simulator() = default;

SimResult Simulator::run(std::span<ControlHook* const> hooks) { return impl_->run(*this, hooks); }
Micros Simulator::now() const { return impl_->now; }
int Simulator::tier_count() const { return impl_->tiers; }
const SimConfig& Simulator::config() const { return impl_->cfg; }
int Simulator::level(int node) const { return impl_->nodes.at(static_cast<std::size_t>(node)).level; }

std::vector<int> Simulator::levels() const {
    std::vector<int> out;
    for (const auto& n : impl_->nodes) out.push_back(n.level);
    return out;
}

bool Simulator::set_frequency(int node, int level) {
    if (node < 0 || node >= impl_->tiers) return false;
    const auto n = static_cast<std::size_t>(node);
    if (level < 0 || level > impl_->cfg.nodes[n].max_level()) return false;
    auto& state = impl_->nodes[n];
    impl_->integrate(n, impl_->now);
    impl_->result.frequency_changes.push_back({impl_->now, node, state.level, level});
    state.level = level;
    return true;
}

std::span<const Activity> Simulator::activities() const { return impl_->result.activity_log.activities; }

double Simulator::utilization(int node, Micros from, Micros to) const {
    if (to <= from) return 0.0;
    const auto n = static_cast<std::size_t>(node);
    return impl_->result.busy_traces.at(n).busy_time(from, to) /
           (impl_->cfg.nodes[n].server_count * static_cast<double>(to - from));
}

std::vector<double> Simulator::slot_busy_time(int node) const {
    const auto& state = impl_->nodes.at(static_cast<std::size_t>(node));
    std::vector<double> out = state.slot_total;
    for (std::size_t s = 0; s < out.size(); ++s)
        if (state.slot_since[s] >= 0) out[s] += static_cast<double>(impl_->now - state.slot_since[s]);
    return out;
}

int Simulator::active_clients() const { return impl_->active; }

SimResult run_sim(const SimConfig& config, std::span<ControlHook* const> hooks) {
    Simulator sim(config);
    return sim.run(hooks);
}

SimResult baseline_run(const SimConfig& config) {
    SimConfig c = config;
    c.initial_levels.clear();
    return run_sim(c);
}

void write_power_csv(std::ostream& out, const SimResult& result) {
    std::vector<std::string> header{"t_us"};
    const auto nodes = result.server_counts.size();
    for (std::size_t n = 0; n < nodes; ++n) header.push_back("node" + std::to_string(n) + "_w");
    header.push_back("total_w");
    write_csv_row(out, header);
    for (const auto& s : result.power_trace) {
        std::vector<std::string> row{std::to_string(s.t)};
        for (double w : s.node_watts) row.push_back(format_number(w));
        row.push_back(format_number(s.total_watts));
        write_csv_row(out, row);
    }
}

}  // namespace tracedvfs
