#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tracedvfs/experiment.hpp"
#include "tracedvfs/perf_model.hpp"
#include "tracedvfs/profiling.hpp"

using namespace tracedvfs;

namespace {

/// Model with one load level and hand-set coefficients.
PerformanceModel hand_model(int tiers, int patterns) {
    PerformanceModel m;
    m.tier_count = tiers;
    m.pattern_count = patterns;
    m.load_levels = {50.0};
    for (int i = 0; i < patterns; ++i) m.pattern_centroids.push_back(100.0 * (i + 1));
    m.dominated_tiers = {tiers - 1};
    m.coeffs.assign(1, std::vector<std::vector<QuadraticFit>>(static_cast<std::size_t>(patterns),
                                                              std::vector<QuadraticFit>(static_cast<std::size_t>(tiers))));
    m.gamma.assign(1, std::vector<double>(static_cast<std::size_t>(patterns), 0.0));
    m.utilization.assign(1, std::vector<double>(static_cast<std::size_t>(tiers), 0.5));
    return m;
}

PerformanceModel random_model(std::mt19937_64& gen, const std::vector<NodeSpec>& nodes, int patterns) {
    const int tiers = static_cast<int>(nodes.size());
    auto m = hand_model(tiers, patterns);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < patterns; ++i) {
        for (int j = 0; j < tiers; ++j) {
            // Service ~ k / F fitted-looking: positive, decreasing over the grid.
            const double k = 1000 + 40000 * u(gen);
            auto& q = m.coeffs[0][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            q.a = k * (0.2 + 0.3 * u(gen)) / 4;
            q.b = -k * (0.9 + 0.2 * u(gen));
            q.c = k * (1.5 + u(gen));
            if (u(gen) < 0.1) q = QuadraticFit{0, 0, -50, 1};  // clamps to zero
        }
        m.gamma[0][static_cast<std::size_t>(i)] = 400 + 2000 * u(gen);
    }
    for (int j = 0; j < tiers; ++j) m.utilization[0][static_cast<std::size_t>(j)] = u(gen);
    return m;
}

}  // namespace

TEST_CASE("quadratic through three exact points") {
    const std::vector<double> f{1.0, 2.0, 3.0};
    std::vector<double> t;
    for (double x : f) t.push_back(2 * x * x - 3 * x + 10);
    const auto q = fit_quadratic(f, t);
    CHECK(q.a == doctest::Approx(2));
    CHECK(q.b == doctest::Approx(-3));
    CHECK(q.c == doctest::Approx(10));
    CHECK(q.r2 == doctest::Approx(1.0));
}

TEST_CASE("constant targets fit with R2 = 1") {
    const std::vector<double> f{0.8, 1.1, 1.6, 2.3};
    const std::vector<double> t(4, 42.0);
    const auto q = fit_quadratic(f, t);
    CHECK(q.a == doctest::Approx(0).epsilon(1e-9));
    CHECK(q.b == doctest::Approx(0).epsilon(1e-9));
    CHECK(q.c == doctest::Approx(42));
    CHECK(q.r2 == 1.0);
    CHECK(r_squared(t, t) == 1.0);
}

TEST_CASE("1/F service on the four-point grids fits with R2 > 0.97") {
    for (const auto& node : default_nodes()) {
        std::vector<double> t;
        for (double f : node.freq_levels_ghz) t.push_back(25000.0 / f);
        CHECK(fit_quadratic(node.freq_levels_ghz, t).r2 > 0.97);
    }
}

TEST_CASE("least squares agrees with the normal-equation oracle") {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.5, 3.0), noise(-50, 50);
    for (int round = 0; round < 200; ++round) {
        const int n = 3 + static_cast<int>(gen() % 6);
        std::vector<double> f, t;
        for (int i = 0; i < n; ++i) {
            f.push_back(u(gen) + i * 1e-3);
            t.push_back(3000 / f.back() + noise(gen));
        }
        const auto q = fit_quadratic(f, t);
        const auto ref = oracle::normal_equations_fit(f, t);
        for (double x : f) CHECK(q(x) == doctest::Approx(ref.a * x * x + ref.b * x + ref.c).epsilon(1e-6));
    }
}

TEST_CASE("duplicate frequencies are rejected") {
    const std::vector<double> f{1.0, 1.0, 2.0, 2.0};
    const std::vector<double> t{5, 6, 7, 8};
    CHECK_THROWS_AS(fit_quadratic(f, t), ModelError);
}

TEST_CASE("dominated tiers") {
    const std::vector<double> shares{0.0011, 0.1763, 0.8226};
    CHECK(dominated_tiers(shares, 0.5) == std::vector<int>{2});
    CHECK(dominated_tiers(shares, 0.10) == std::vector<int>{2, 1});
    const std::vector<double> flat{1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(dominated_tiers(flat, 0.5) == std::vector<int>{0});
}

TEST_CASE("predict_latency") {
    const auto nodes = default_nodes();
    SUBCASE("gamma only") {
        auto m = hand_model(3, 2);
        m.gamma[0] = {12000, 12000};
        const auto d = predict_latency(m, 50.0, max_frequencies(nodes), nodes);
        CHECK(d == std::vector<double>{12000, 12000});
    }
    SUBCASE("constant terms add up") {
        auto m = hand_model(3, 1);
        m.coeffs[0][0] = {QuadraticFit{0, 0, 100}, QuadraticFit{0, 0, 2000}, QuadraticFit{0, 0, 30000}};
        m.gamma[0][0] = 700;
        CHECK(predict_latency(m, 50.0, min_frequencies(nodes), nodes)[0] == 32800);
    }
    SUBCASE("negative polynomials clamp to zero") {
        auto m = hand_model(3, 1);
        m.coeffs[0][0][2] = QuadraticFit{0, 0, -5};
        int clamped = 0;
        CHECK(predict_latency(m, 50.0, max_frequencies(nodes), nodes, &clamped)[0] == 0);
        CHECK(clamped == 1);
    }
    SUBCASE("unknown load level") {
        const auto m = hand_model(3, 1);
        CHECK_THROWS_AS(predict_latency(m, 51.0, max_frequencies(nodes), nodes), ModelError);
        CHECK_THROWS_AS(predict_latency_at(m, 1, max_frequencies(nodes), nodes), ModelError);
    }
}

TEST_CASE("fast modulation examples") {
    const auto nodes = default_nodes();
    std::mt19937_64 gen(1);
    const auto m = random_model(gen, nodes, 2);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(fast_modulation(m, 0, std::vector<double>{inf, inf}, nodes) == min_frequencies(nodes));
    const auto at_max = predict_latency_at(m, 0, max_frequencies(nodes), nodes);
    const std::vector<double> tight{at_max[0] * 0.99, at_max[1] * 0.99};
    CHECK(fast_modulation(m, 0, tight, nodes) == max_frequencies(nodes));
}

TEST_CASE("fast modulation on 2 tiers x 2 levels matches brute force") {
    std::vector<NodeSpec> nodes(2);
    nodes[0] = NodeSpec{"a", {1.0, 2.0}, 1, PowerParams{50, 40, 3}};
    nodes[1] = NodeSpec{"b", {1.0, 2.0}, 1, PowerParams{60, 80, 3}};
    auto m = hand_model(2, 1);
    m.coeffs[0][0] = {QuadraticFit{0, -1000, 3000}, QuadraticFit{0, -4000, 9000}};
    m.utilization[0] = {0.3, 0.3};
    // Latencies: (1,1)=7000 (1,2)=3000 (2,1)=6000 (2,2)=2000.
    for (double th : {1000.0, 2500.0, 3500.0, 6500.0, 8000.0}) {
        const std::vector<double> t{th};
        CHECK(fast_modulation(m, 0, t, nodes).level == oracle::brute_force_fast_modulation(m, 0, t, nodes));
    }
    CHECK(fast_modulation(m, 0, std::vector<double>{3500.0}, nodes).level == std::vector<int>{0, 1});
}

TEST_CASE("fast modulation matches brute force on random instances") {
    std::mt19937_64 gen(99);
    const auto nodes = default_nodes();
    for (int round = 0; round < 300; ++round) {
        const int n = 1 + static_cast<int>(gen() % 5);
        const auto m = random_model(gen, nodes, n);
        const auto lo = predict_latency_at(m, 0, max_frequencies(nodes), nodes);
        const auto hi = predict_latency_at(m, 0, min_frequencies(nodes), nodes);
        std::uniform_real_distribution<double> u(0.9, 1.1);
        std::vector<double> th;
        for (int i = 0; i < n; ++i)
            th.push_back(u(gen) * (lo[static_cast<std::size_t>(i)] +
                                   (hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]) * (gen() % 100) / 100.0));
        const auto got = fast_modulation(m, 0, th, nodes);
        CHECK(got.level == oracle::brute_force_fast_modulation(m, 0, th, nodes));
    }
}

TEST_CASE("predicted power is monotone in each tier") {
    const auto nodes = default_nodes();
    const std::vector<double> u{0.01, 0.2, 0.4};
    FrequencyVector f = min_frequencies(nodes);
    double prev = predicted_power(nodes, u, f);
    for (std::size_t j = 0; j < nodes.size(); ++j)
        for (int l = 1; l <= nodes[j].max_level(); ++l) {
            f.level[j] = l;
            const double p = predicted_power(nodes, u, f);
            CHECK(p >= prev);
            prev = p;
        }
}

TEST_CASE("pre_model round-trips bit-exactly") {
    std::mt19937_64 gen(4);
    auto m = random_model(gen, default_nodes(), 3);
    m.load_levels = {50.0};
    const std::string text = write_pre_model(m);
    const auto back = parse_pre_model(text);
    CHECK(write_pre_model(back) == text);
    CHECK(text.rfind("PREMODEL v1 M=3 N=3\n", 0) == 0);
    CHECK(text.find("\nLOADS 50\n") != std::string::npos);
    CHECK(text.find("\nGAMMA 50 0 ") != std::string::npos);
    CHECK(text.find("\nCOEF 50 2 2 ") != std::string::npos);

    CHECK_THROWS_AS(parse_pre_model(std::string("COEF 0 0 0 1 2 3 1\n")), ModelError);
    CHECK_THROWS_AS(parse_pre_model(text.substr(0, text.find("COEF"))), ModelError);
    std::string bad = text;
    bad.replace(bad.find("LOADS 50"), 8, "LOADS x5");
    CHECK_THROWS_AS(parse_pre_model(bad), ModelError);
}

TEST_CASE("fit_model on a synthetic dataset") {
    ProfilingDataset d;
    d.tier_count = 2;
    d.pattern_count = 1;
    d.load_levels = {10.0};
    d.pattern_centroids = {300};
    d.swept_tiers = {1};
    const std::vector<double> grid{1.0, 1.5, 2.0, 2.5};
    for (double f : grid) {
        d.samples.push_back({0, 0, 1, 1, f, 6000.0 / f, 10});
        d.samples.push_back({0, 0, 0, 1, 2.2, 50.0, 10});
    }
    d.gamma_samples = {{0, 0, 800.0, 10}, {0, 0, 1200.0, 30}};
    const auto m = fit_model(d);
    CHECK(m.coef(0, 0, 0) == QuadraticFit{0, 0, 50, 1});
    CHECK(m.coef(0, 0, 1).r2 > 0.97);
    CHECK(m.gamma[0][0] == doctest::Approx(1100));
    CHECK(m.dominated_tiers == std::vector<int>{1});
    // Predictions at the training points stay within the residual.
    const auto q = m.coef(0, 0, 1);
    double ss = 0;
    for (double f : grid) ss += (q(f) - 6000 / f) * (q(f) - 6000 / f);
    for (double f : grid) CHECK(std::abs(q(f) - 6000 / f) <= std::sqrt(ss) + 1e-9);

    d.samples.push_back({0, 0, 1, 1, 1.0, 5999.0, 10});
    d.samples.erase(d.samples.begin() + 2, d.samples.begin() + 6);
    CHECK_THROWS_AS(fit_model(d), ModelError);
}

TEST_CASE("profiling run counts") {
    Scenario sc = default_scenario("read_only");
    ProfilingPlan plan;
    plan.base = sc.sim;
    plan.client_levels = sc.profile_clients;
    plan.tiers_to_sweep = {2};
    CHECK(profiling_run_count(plan) == 40);
    plan.tiers_to_sweep = {0, 1, 2};
    CHECK(profiling_run_count(plan) == 120);
}

TEST_CASE("minimal profiling campaign") {
    Scenario sc = default_scenario("read_only");
    ProfilingPlan plan;
    plan.base = sc.sim;
    plan.base.nodes[2].freq_levels_ghz = {2.3};
    plan.client_levels = {100};
    plan.tiers_to_sweep = {2};
    plan.runtime_s = 30;
    const auto d = run_profiling(plan);
    CHECK(d.run_count == 1);
    CHECK(d.load_levels.size() == 1);
    CHECK(d.pattern_count == 7);
    for (const auto& s : d.samples) {
        CHECK(s.freq_ghz == (s.tier == 2 ? 2.3 : sc.sim.nodes[static_cast<std::size_t>(s.tier)].max_freq()));
        CHECK(s.count > 0);
    }
}

TEST_CASE("profiled model predicts a held-out run at max frequency") {
    Scenario sc = default_scenario("read_only");
    const auto model = fit_model(run_profiling(profiling_plan(sc)));
    for (std::size_t l = 0; l < model.load_levels.size(); ++l)
        for (int i = 0; i < model.pattern_count; ++i)
            for (int j : model.dominated_tiers) CHECK(model.coef(l, i, j).r2 > 0.97);

    const std::size_t level = 5;
    SimConfig held = sc.sim;
    held.workload.client_count = sc.profile_clients[level];
    held.workload.runtime_s = sc.profile_runtime_s;
    held.seed = 4242;
    const auto info = measure_baseline(held, model.pattern_centroids, sc.k);
    const auto predicted = predict_latency_at(model, level, max_frequencies(held.nodes), held.nodes);
    for (std::size_t i = 0; i < predicted.size(); ++i)
        CHECK(std::abs(predicted[i] - info.sl[i]) / info.sl[i] < 0.10);
}
