#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tracedvfs/controllers.hpp"

using namespace tracedvfs;

namespace {

PatternStats pattern(std::int64_t id, double d, std::vector<double> st, double fraction = 0.5) {
    PatternStats p;
    p.pattern_id = id;
    p.avg_server_side_latency = d;
    p.avg_tier_service_time = std::move(st);
    p.fraction = fraction;
    p.path_count = 10;
    return p;
}

ControllerObservation observe(std::vector<PatternStats> pats, std::vector<int> levels = {2, 2, 2}) {
    ControllerObservation obs;
    obs.window.patterns = std::move(pats);
    obs.current_freq.level = std::move(levels);
    obs.max_level.assign(obs.current_freq.level.size(), 3);
    obs.per_node_utilization.assign(obs.current_freq.level.size(), 0.5);
    if (!obs.window.patterns.empty()) {
        obs.window.aggregate = obs.window.patterns[0];
        obs.window.aggregate.path_count = 20;
    }
    return obs;
}

int changed_tiers(const FrequencyVector& a, const FrequencyVector& b) {
    int n = 0;
    for (std::size_t j = 0; j < a.level.size(); ++j) n += a.level[j] != b.level[j];
    return n;
}

}  // namespace

TEST_CASE("zone validation") {
    CHECK_NOTHROW(ThresholdZone{{1000}, 1.2, 0.8}.validate());
    CHECK_THROWS(ThresholdZone{{}, 1.2, 0.8}.validate());
    CHECK_THROWS(ThresholdZone{{1000}, 0.9, 0.8}.validate());
    CHECK_THROWS(ThresholdZone{{1000}, 1.2, 1.0}.validate());
    CHECK_THROWS(ThresholdZone{{0}, 1.2, 0.8}.validate());
}

TEST_CASE("violation steps up the largest service tier of the worst pattern") {
    const ThresholdZone zone{{100, 100}, 1.2, 0.8};
    auto obs = observe({pattern(0, 130, {1, 2, 30}), pattern(1, 90, {5, 40, 1})});
    const auto d = powertracer_step(obs, zone);
    CHECK(d.direction == Direction::Up);
    CHECK(d.changed_tier == 2);
    CHECK(d.new_freq.level == std::vector<int>{2, 2, 3});
    CHECK(d.reason == Reason::Violation);

    obs.current_freq.level = {2, 2, 3};
    const auto next = powertracer_step(obs, zone);
    CHECK(next.changed_tier == 1);  // db at max: fall through
    obs.current_freq.level = {3, 3, 3};
    const auto top = powertracer_step(obs, zone);
    CHECK(top.direction == Direction::Hold);
    CHECK(top.reason == Reason::AtBoundary);
}

TEST_CASE("slack steps down the smallest weighted service tier") {
    const ThresholdZone zone{{100, 100}, 1.2, 0.8};
    // Weighted means (0.1, 5, 40).
    auto obs = observe({pattern(0, 50, {0.1, 5, 40}, 0.6), pattern(1, 70, {0.1, 5, 40}, 0.4)});
    const auto d = powertracer_step(obs, zone);
    CHECK(d.direction == Direction::Down);
    CHECK(d.changed_tier == 0);
    obs.current_freq.level = {0, 0, 1};
    CHECK(powertracer_step(obs, zone).changed_tier == 2);
    obs.current_freq.level = {0, 0, 0};
    CHECK(powertracer_step(obs, zone).reason == Reason::AtBoundary);
}

TEST_CASE("in-zone holds and missing data holds") {
    const ThresholdZone zone{{100, 100}, 1.2, 0.8};
    const auto obs = observe({pattern(0, 110, {1, 2, 3}), pattern(1, 85, {1, 2, 3})});
    const auto d = powertracer_step(obs, zone);
    CHECK(d.direction == Direction::Hold);
    CHECK(d.new_freq == obs.current_freq);
    CHECK(d.reason == Reason::InZone);
    const auto empty = observe({});
    CHECK(powertracer_step(empty, zone).reason == Reason::NoData);
    CHECK(powertracer_np_step(empty, zone).reason == Reason::NoData);
}

TEST_CASE("patterns without a threshold are ignored") {
    const ThresholdZone zone{{100}, 1.2, 0.8};
    const auto obs = observe({pattern(0, 100, {1, 2, 3}), pattern(7, 1000, {1, 2, 3})});
    CHECK(powertracer_step(obs, zone).direction == Direction::Hold);
}

TEST_CASE("NP variant uses the pooled record") {
    const ThresholdZone zone{{100}, 1.2, 0.8};
    auto obs = observe({pattern(0, 10, {1, 2, 3})});
    obs.window.aggregate = pattern(0, 200, {1, 5, 90}, 1.0);
    obs.window.aggregate.path_count = 5;
    CHECK(powertracer_np_step(obs, zone).changed_tier == 2);
    obs.window.aggregate.avg_server_side_latency = 20;
    const auto down = powertracer_np_step(obs, zone);
    CHECK(down.direction == Direction::Down);
    CHECK(down.changed_tier == 0);
    obs.window.aggregate.avg_server_side_latency = 100;
    CHECK(powertracer_np_step(obs, zone).direction == Direction::Hold);
}

TEST_CASE("SimpleDVS ranks tiers by utilization") {
    const ThresholdZone zone{{100}, 1.2, 0.8};
    auto obs = observe({pattern(0, 200, {1, 2, 3})});
    obs.per_node_utilization = {0.2, 0.5, 0.9};
    obs.window.aggregate.avg_server_side_latency = 200;
    CHECK(simpledvs_step(obs, zone).changed_tier == 2);
    obs.window.aggregate.avg_server_side_latency = 10;
    const auto d = simpledvs_step(obs, zone);
    CHECK(d.direction == Direction::Down);
    CHECK(d.changed_tier == 0);
    obs.window.aggregate.avg_server_side_latency = 100;
    CHECK(simpledvs_step(obs, zone).direction == Direction::Hold);
}

TEST_CASE("ondemand proportional rule") {
    const std::vector<double> web{1.0, 1.8, 2.0, 2.2};
    CHECK(ondemand_level(0.95, web, 0) == 3);
    CHECK(ondemand_level(0.0, web, 3) == 0);
    CHECK(ondemand_level(0.4, web, 3) == 1);
    CHECK(ondemand_level(0.8, web, 3) == 3);
    const auto nodes = default_nodes();
    const std::vector<double> u{0.95, 0.0, 0.4};
    const std::vector<int> cur{0, 3, 3};
    CHECK(ondemand_step(u, nodes, cur) == std::vector<int>{3, 0, 2});
}

TEST_CASE("step law properties over random observations") {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0, 1);
    for (int round = 0; round < 10000; ++round) {
        const std::size_t m = 1 + gen() % 4;
        const std::size_t n = 1 + gen() % 5;
        ThresholdZone zone;
        for (std::size_t i = 0; i < n; ++i) zone.th.push_back(1000 + 9000 * u(gen));
        ControllerObservation obs;
        obs.max_level.resize(m);
        obs.current_freq.level.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            obs.max_level[j] = 1 + static_cast<int>(gen() % 4);
            const int r = static_cast<int>(gen() % 4);  // bias towards boundaries
            obs.current_freq.level[j] = r == 0 ? 0 : r == 1 ? obs.max_level[j] : static_cast<int>(gen() % (obs.max_level[j] + 1));
            obs.per_node_utilization.push_back(u(gen));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (gen() % 5 == 0) continue;
            std::vector<double> st;
            for (std::size_t j = 0; j < m; ++j) st.push_back(gen() % 3 == 0 ? 100.0 : 100 * u(gen));
            const double scale = gen() % 3 == 0 ? 0.5 + u(gen) : 1.5 * u(gen) + 0.2;
            obs.window.patterns.push_back(pattern(static_cast<std::int64_t>(i), scale * zone.th[i], st, u(gen)));
        }
        if (!obs.window.patterns.empty()) {
            obs.window.aggregate = obs.window.patterns[gen() % obs.window.patterns.size()];
            obs.window.aggregate.pattern_id = 0;
        }

        for (int kind = 0; kind < 3; ++kind) {
            const auto d = kind == 0 ? powertracer_step(obs, zone)
                         : kind == 1 ? powertracer_np_step(obs, zone)
                                     : simpledvs_step(obs, zone);
            const int changed = changed_tiers(d.new_freq, obs.current_freq);
            for (std::size_t j = 0; j < m; ++j) {
                CHECK(d.new_freq.level[j] >= 0);
                CHECK(d.new_freq.level[j] <= obs.max_level[j]);
            }
            if (d.direction == Direction::Hold) {
                CHECK(changed == 0);
                CHECK_FALSE(d.changed_tier);
            } else {
                REQUIRE(d.changed_tier);
                CHECK(changed == 1);
                const auto t = static_cast<std::size_t>(*d.changed_tier);
                CHECK(d.new_freq.level[t] - obs.current_freq.level[t] == (d.direction == Direction::Up ? 1 : -1));
            }
            if (kind == 0) {
                bool violation = false, all_below = true, any = false;
                for (const auto& p : obs.window.patterns) {
                    const double th = zone.th[static_cast<std::size_t>(p.pattern_id)];
                    any = true;
                    violation = violation || p.avg_server_side_latency > zone.up * th;
                    all_below = all_below && p.avg_server_side_latency < zone.lp * th;
                }
                if (d.direction == Direction::Up) CHECK(violation);
                if (d.direction == Direction::Down) CHECK((all_below && !violation));
                if (any && !violation && !all_below) CHECK(d.reason == Reason::InZone);
                const auto ref = oracle::reference_step(obs, zone);
                CHECK(d.new_freq == ref.new_freq);
                CHECK(d.direction == ref.direction);
                CHECK(d.reason == ref.reason);
            }
        }
    }
}

TEST_CASE("identical observations give identical decisions") {
    const ThresholdZone zone{{100, 100}, 1.2, 0.8};
    const auto obs = observe({pattern(0, 130, {1, 2, 30}), pattern(1, 90, {5, 40, 1})});
    const auto a = powertracer_step(obs, zone);
    const auto b = powertracer_step(obs, zone);
    CHECK(a.new_freq == b.new_freq);
    CHECK(a.reason == b.reason);
}
