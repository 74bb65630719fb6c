#include <doctest.h>

#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tracedvfs/cluster_sim.hpp"
#include "tracedvfs/pattern_analyzer.hpp"
#include "tracedvfs/profiling.hpp"

using namespace tracedvfs;

namespace {

double wcss_of(const std::vector<double>& v, const Clustering& c) {
    double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - c.centroids[static_cast<std::size_t>(c.labels[i])];
        s += d * d;
    }
    return s;
}

std::vector<double> class_sizes(std::mt19937_64& gen, int n, double jitter) {
    const double centers[] = {212, 348, 517, 760, 1024, 1490, 2210};
    std::uniform_int_distribution<int> pick(0, 6);
    std::uniform_real_distribution<double> noise(-jitter, jitter);
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(std::round(centers[pick(gen)] + noise(gen)));
    return v;
}

}  // namespace

TEST_CASE("one distinct size gives one cluster") {
    const std::vector<double> v(40, 512.0);
    const auto c = kmeans_1d(v, 3);
    CHECK(c.centroids == std::vector<double>{512.0});
    for (int l : c.labels) CHECK(l == 0);
}

TEST_CASE("two separated groups split at the gap") {
    std::vector<double> v;
    for (int i = 0; i < 50; ++i) {
        v.push_back(100);
        v.push_back(5000);
    }
    const auto c = kmeans_1d(v, 2);
    REQUIRE(c.centroids.size() == 2);
    CHECK(c.centroids[0] == 100);
    CHECK(c.centroids[1] == 5000);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(c.labels[i] == (v[i] < 1000 ? 0 : 1));
}

TEST_CASE("k-means matches optimal 1-D clustering on separated classes") {
    std::mt19937_64 gen(3);
    int optimal_noisy = 0;
    for (int round = 0; round < 20; ++round) {
        const auto v = class_sizes(gen, 200, 0.0);
        for (int k : {7, 10}) {
            const auto c = kmeans_1d(v, k);
            CHECK(c.wcss() == doctest::Approx(oracle::optimal_wcss(v, k)).epsilon(1e-9));
        }
        // Jittered sizes: quantile seeding is a local method, so only mostly optimal.
        const auto noisy = class_sizes(gen, 200, 20.0);
        const double got = wcss_of(noisy, kmeans_1d(noisy, 7));
        const double best = oracle::optimal_wcss(noisy, 7);
        CHECK(got >= best * (1 - 1e-9));
        optimal_noisy += got <= best * (1 + 1e-9);
    }
    CHECK(optimal_noisy >= 18);
}

TEST_CASE("k-means is deterministic and WCSS never increases") {
    std::mt19937_64 gen(5);
    for (int round = 0; round < 50; ++round) {
        std::vector<double> v(100);
        std::uniform_real_distribution<double> u(0, 1000);
        for (auto& x : v) x = u(gen);
        const int k = 1 + static_cast<int>(gen() % 10);
        const auto a = kmeans_1d(v, k);
        const auto b = kmeans_1d(v, k);
        CHECK(a.labels == b.labels);
        CHECK(a.centroids == b.centroids);
        CHECK(std::is_sorted(a.centroids.begin(), a.centroids.end()));
        for (std::size_t i = 1; i < a.wcss_history.size(); ++i)
            CHECK(a.wcss_history[i] <= a.wcss_history[i - 1] * (1 + 1e-12));
        CHECK(a.wcss() >= oracle::optimal_wcss(v, k) * (1 - 1e-9));
    }
}

TEST_CASE("classify needs complete paths") {
    std::vector<const CausalPath*> none;
    CHECK_THROWS_AS(classify(none, 3), NoPathsError);
}

TEST_CASE("estimate_load counts BEGINs per second") {
    ActivityLog log;
    log.tier_count = 1;
    CHECK(estimate_load(log, 0, 5 * kMicrosPerSecond) == 0.0);
    for (int i = 0; i < 250; ++i) {
        Activity a;
        a.timestamp = i * 20'000;
        a.kind = ActivityKind::Begin;
        a.context = "c" + std::to_string(i);
        log.activities.push_back(a);
    }
    CHECK(estimate_load(log, 0, 5 * kMicrosPerSecond) == 50.0);
}

TEST_CASE("quantize_load") {
    const std::vector<double> levels{10, 20};
    CHECK(quantize_load(0, levels) == 0);
    CHECK(quantize_load(14.9, levels) == 0);
    CHECK(quantize_load(15.0, levels) == 1);
    CHECK(quantize_load(1e9, levels) == 1);
}

TEST_CASE("measured load follows Little's law for a closed loop") {
    auto w = read_only_workload(100);
    w.runtime_s = 200;
    const auto r = run_sim(SimConfig{default_nodes(), w});
    const double rate = estimate_load(r.activity_log, r.runtime_start, r.runtime_end);
    const double think_s = static_cast<double>(w.think_time_mean) / kMicrosPerSecond;
    const double predicted = 100.0 / (think_s + r.summary.mean_latency_us / kMicrosPerSecond);
    CHECK(std::abs(rate - predicted) / predicted < 0.10);
}

TEST_CASE("top patterns on simulator windows") {
    auto w = read_only_workload(300);
    w.runtime_s = 60;
    const auto r = run_sim(SimConfig{default_nodes(), w});
    const auto report = reconstruct(r.activity_log);
    auto paths = paths_between(report, r.runtime_start, r.runtime_end);
    REQUIRE(paths.size() > 1000);
    paths.resize(1000);

    std::size_t begins = 0;
    for (const auto& a : r.activity_log.activities) begins += a.kind == ActivityKind::Begin;
    const WindowInput in{r.runtime_start, r.runtime_end, begins, 3};

    SUBCASE("fractions match a group-by on ground-truth class") {
        const auto win = top_patterns(paths, 10, 3, in);
        REQUIRE(win.patterns.size() == 3);
        std::map<std::uint64_t, std::size_t> count;
        for (const auto* p : paths) ++count[p->first_message_size];
        std::vector<std::pair<std::size_t, std::uint64_t>> ranked;
        for (auto [size, n] : count) ranked.emplace_back(n, size);
        std::sort(ranked.begin(), ranked.end(), [](auto a, auto b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(win.patterns[i].first_message_size_centroid == static_cast<double>(ranked[i].second));
            CHECK(win.patterns[i].fraction == doctest::Approx(static_cast<double>(ranked[i].first) / 1000.0));
        }
    }
    SUBCASE("top-10 covers more than 88 percent and fractions are ordered") {
        const auto win = top_patterns(paths, 10, 10, in);
        double sum = 0;
        for (std::size_t i = 0; i < win.patterns.size(); ++i) {
            sum += win.patterns[i].fraction;
            if (i > 0) CHECK(win.patterns[i].fraction <= win.patterns[i - 1].fraction);
            double st = 0;
            for (double s : win.patterns[i].avg_tier_service_time) {
                CHECK(s >= 0);
                st += s;
            }
            CHECK(st <= win.patterns[i].avg_server_side_latency + 1e-6);
            CHECK(win.patterns[i].current_load == doctest::Approx(win.patterns[0].current_load));
        }
        CHECK(sum > 0.88);
        CHECK(sum <= 1.0 + 1e-9);
        CHECK(win.aggregate.path_count == 1000);
    }
}

TEST_CASE("one request class yields one pattern with fraction 1") {
    auto w = read_only_workload(40);
    w.classes.resize(1);
    w.transition = {{1.0}};
    w.runtime_s = 30;
    const auto r = run_sim(SimConfig{default_nodes(), w});
    const auto report = reconstruct(r.activity_log);
    const auto paths = report.complete_paths();
    const auto win = top_patterns(paths, 10, 5, WindowInput{0, r.duration, 0, 3});
    REQUIRE(win.patterns.size() == 1);
    CHECK(win.patterns[0].fraction == 1.0);
}

TEST_CASE("pattern ids stay stable across windows") {
    PatternTracker tracker;
    const std::vector<double> ref{212, 348, 517};
    tracker.seed(std::span<const double>(ref));
    std::vector<PatternStats> pats(3);
    pats[0].first_message_size_centroid = 520;
    pats[1].first_message_size_centroid = 210;
    pats[2].first_message_size_centroid = 9000;
    tracker.assign_ids(pats);
    CHECK(pats[0].pattern_id == 2);
    CHECK(pats[1].pattern_id == 0);
    CHECK(pats[2].pattern_id >= 3);
}

TEST_CASE("pattern CSV has the 5-tuple columns") {
    std::ostringstream out;
    write_pattern_csv_header(out, 3);
    CHECK(out.str() ==
          "window_start_us,pattern_id,first_msg_size,avg_latency_us,svc_t0_us,svc_t1_us,svc_t2_us,load_rps,fraction\n");
}
