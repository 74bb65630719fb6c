#include <cmath>

#include "tracedvfs/cluster_sim.hpp"

namespace tracedvfs {

namespace {

constexpr double kFrontMaxGhz = 2.2;
constexpr double kDbMaxGhz = 2.3;

/// Cycles that take `us` microseconds at `ghz`.
double cycles_for(double us, double ghz) { return us * ghz * 1e3; }

struct ClassShape {
    const char* name;
    std::uint64_t size;
    double share;
    double latency_ms;  // unloaded, all nodes at max
    double web_frac;
    double db_frac;
    int db_calls;
};

/// Builds a three-tier class: web -> app -> db (db_calls times) with the
/// given service split. The network hops are taken out of the app share.
RequestClass build_class(const ClassShape& s, Micros hop_latency) {
    RequestClass c;
    c.name = s.name;
    c.request_size = s.size;
    const double total = s.latency_ms * 1e3;
    if (s.db_calls == 0 && s.db_frac == 0.0 && s.web_frac >= 1.0) {
        c.hops = {{0, cycles_for(total, kFrontMaxGhz)}};
        return c;
    }
    const double network = static_cast<double>(hop_latency) * (2.0 + 2.0 * s.db_calls);
    const double web = total * s.web_frac;
    const double db = total * s.db_frac;
    const double app = std::max(0.0, total - web - db - network);
    c.hops.push_back({0, cycles_for(web, kFrontMaxGhz)});
    c.hops.push_back({1, cycles_for(app, kFrontMaxGhz)});
    for (int k = 0; k < s.db_calls; ++k) c.hops.push_back({2, cycles_for(db / s.db_calls, kDbMaxGhz)});
    return c;
}

WorkloadSpec build(const char* name, std::span<const ClassShape> shapes, int clients, double locality) {
    WorkloadSpec w;
    w.name = name;
    w.client_count = clients;
    w.demand_cv = 0.3;
    std::vector<double> mix;
    for (const auto& s : shapes) {
        w.classes.push_back(build_class(s, 200));
        mix.push_back(s.share);
    }
    w.transition = transition_table_for(mix, locality);
    return w;
}

// Browse-only mix. Shares and latency shape follow an auction site's read
// pages; web work is about a thousandth of the path.
constexpr ClassShape kReadOnly[] = {
    {"browse_categories", 212, 0.26, 14.4, 0.0011, 0.745, 1},
    {"browse_regions", 348, 0.20, 20.0, 0.0011, 0.805, 1},
    {"search_items", 517, 0.16, 28.0, 0.0011, 0.84, 1},
    {"view_item", 760, 0.13, 36.0, 0.0011, 0.85, 1},
    {"view_user", 1024, 0.11, 48.0, 0.0011, 0.86, 1},
    {"view_bid_history", 1490, 0.08, 60.0, 0.0011, 0.86, 1},
    {"about_me", 2210, 0.06, 72.0, 0.0011, 0.87, 1},
};

// Mixed read/write: a static page served by the web tier alone, reads, and
// writes that touch the database twice.
constexpr ClassShape kReadWrite[] = {
    {"static_page", 140, 0.15, 1.5, 1.0, 0.0, 0},
    {"browse", 290, 0.20, 10.0, 0.002, 0.78, 1},
    {"search", 455, 0.15, 16.0, 0.002, 0.80, 1},
    {"view_item", 690, 0.13, 24.0, 0.002, 0.80, 1},
    {"view_user", 930, 0.12, 20.0, 0.002, 0.80, 1},
    {"place_bid", 1350, 0.10, 30.0, 0.002, 0.80, 2},
    {"buy_now", 1870, 0.08, 36.0, 0.002, 0.80, 2},
    {"register_user", 2600, 0.07, 28.0, 0.002, 0.80, 2},
};

}  // namespace

std::vector<NodeSpec> default_nodes() {
    const std::vector<double> front{1.0, 1.8, 2.0, 2.2};
    const std::vector<double> db{0.8, 1.1, 1.6, 2.3};
    return {
        NodeSpec{"web", front, 2, PowerParams{100.0, 23.3, 3.0}},
        NodeSpec{"app", front, 2, PowerParams{100.0, 23.3, 3.0}},
        NodeSpec{"db", db, 8, PowerParams{250.0, 58.4, 3.0}},
    };
}

WorkloadSpec read_only_workload(int clients) { return build("read_only", kReadOnly, clients, 0.5); }

WorkloadSpec read_write_workload(int clients) { return build("read_write", kReadWrite, clients, 0.5); }

WorkloadSpec workload_by_name(const std::string& name, int clients) {
    if (name == "read_only" || name == "browse_only") return read_only_workload(clients);
    if (name == "read_write" || name == "transition" || name == "mixed") return read_write_workload(clients);
    throw ConfigError("unknown workload '" + name + "' (expected read_only or read_write)");
}

}  // namespace tracedvfs
