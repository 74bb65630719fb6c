#include <doctest.h>

#include <sstream>

#include "tracedvfs/control_loop.hpp"
#include "tracedvfs/experiment.hpp"

using namespace tracedvfs;

namespace {

const PerformanceModel& read_only_model() {
    static const PerformanceModel model = fit_model(run_profiling(profiling_plan(default_scenario("read_only"))));
    return model;
}

std::string config_error(const std::string& text) {
    try {
        parse_scenario_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("scenario defaults per workload") {
    const auto ro = default_scenario("read_only");
    CHECK(ro.sim.deadline == 500'000);
    CHECK(ro.factor == 3.0);
    CHECK(ro.profile_clients.size() == 10);
    const auto rw = default_scenario("read_write");
    CHECK(rw.sim.deadline == 200'000);
    CHECK(rw.factor == 5.0);
    CHECK(rw.sim.workload.classes.size() == 8);
    CHECK_THROWS_AS(default_scenario("nope"), ConfigError);
}

TEST_CASE("scenario parser") {
    const auto sc = parse_scenario_text(
        "# comment\n"
        "workload = read_write\n"
        "clients = 250   # trailing comment\n"
        "runtime_s = 120\n"
        "deadline_ms = 150\n"
        "controller = simpledvs\n"
        "factor = 2.5\n"
        "load_steps = 60:400, 90:100\n"
        "node.2.freqs = 1.0, 2.0, 3.0\n"
        "node.2.p_idle = 200\n"
        "profile.clients = 100,200,300\n");
    CHECK(sc.sim.workload.client_count == 250);
    CHECK(sc.sim.workload.runtime_s == 120);
    CHECK(sc.sim.deadline == 150'000);
    CHECK(sc.controller == ControllerKind::SimpleDVS);
    CHECK(sc.factor == 2.5);
    REQUIRE(sc.sim.workload.load_steps.size() == 2);
    CHECK(sc.sim.workload.load_steps[0].at == 60 * kMicrosPerSecond);
    CHECK(sc.sim.workload.load_steps[1].clients == 100);
    CHECK(sc.sim.nodes[2].freq_levels_ghz == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(sc.sim.nodes[2].power.p_idle_w == 200);
    CHECK(sc.profile_clients == std::vector<int>{100, 200, 300});
}

TEST_CASE("scenario errors name the line") {
    CHECK(config_error("clients = 10\nbogus = 1\n").find("line 2") != std::string::npos);
    CHECK(config_error("clients = 10\nclients = 20\n").find("duplicate") != std::string::npos);
    CHECK(config_error("clients = ten\n").find("line 1") != std::string::npos);
    CHECK(config_error("no equals sign\n").find("line 1") != std::string::npos);
    CHECK(config_error("controller = magic\n").find("powertracer_np") != std::string::npos);
    CHECK(config_error("node.0.freqs = 2.0, 1.0\n") != "");
    CHECK(config_error("up = 0.9\n") != "");
    CHECK_THROWS_AS(load_scenario("/nonexistent/file.conf"), ConfigError);
}

TEST_CASE("controller names") {
    CHECK(parse_controller("powertracer_np") == ControllerKind::PowerTracerNP);
    CHECK(to_token(ControllerKind::Ondemand) == "ondemand");
    CHECK(needs_model(ControllerKind::PowerTracer));
    CHECK_FALSE(needs_model(ControllerKind::SimpleDVS));
}

TEST_CASE("load level tracker hysteresis") {
    LoadLevelTracker t({10, 20, 30}, 3, 0.75);
    CHECK(t.update(11));
    CHECK(t.level() == 0);
    CHECK_FALSE(t.update(19));  // candidate 1 but beyond-margin and unconfirmed
    CHECK_FALSE(t.update(19));
    CHECK(t.update(19));
    CHECK(t.level() == 1);
    CHECK_FALSE(t.update(26));  // candidate 2 but only 0.6 of the way
    CHECK_FALSE(t.update(26));
    CHECK_FALSE(t.update(26));
    CHECK(t.level() == 1);
}

TEST_CASE("decision CSV layout") {
    DecisionRecord r;
    r.t = 5'000'000;
    r.controller = ControllerKind::PowerTracer;
    r.direction = Direction::Up;
    r.reason = Reason::Violation;
    r.tier = 2;
    r.old_level = 1;
    r.new_level = 2;
    r.d = {12345.5, std::nullopt};
    DecisionRecord h;
    h.t = 10'000'000;
    h.controller = ControllerKind::PowerTracer;
    h.d = {1.0, 2.0};
    std::ostringstream out;
    write_decision_csv(out, {r, h}, 2);
    CHECK(out.str() ==
          "t_us,controller,direction,tier,old_level,new_level,reason,D1_us,D2_us\n"
          "5000000,powertracer,up,2,1,2,violation,12345.5,\n"
          "10000000,powertracer,hold,,,,in-zone,1,2\n");
}

TEST_CASE("baseline run saves nothing") {
    Scenario sc = default_scenario("read_only", 200);
    sc.sim.workload.runtime_s = 60;
    sc.controller = ControllerKind::Baseline;
    const auto o = run_scenario(sc, nullptr);
    CHECK(o.saving_pct == 0.0);
    CHECK(o.mean_power_w == o.baseline_power_w);
    CHECK(o.decisions.empty());
}

TEST_CASE("powertracer requires a model") {
    Scenario sc = default_scenario("read_only", 100);
    sc.controller = ControllerKind::PowerTracer;
    CHECK_THROWS_AS(run_scenario(sc, nullptr), ConfigError);
}

TEST_CASE("control schedule yields 60 windows over 300 s") {
    Scenario sc = default_scenario("read_only", 300);
    for (auto kind : {ControllerKind::PowerTracer, ControllerKind::SimpleDVS}) {
        sc.controller = kind;
        const auto o = run_scenario(sc, &read_only_model());
        CHECK(o.observations == 60);
    }
}

TEST_CASE("a load step triggers exactly one extra fast modulation") {
    Scenario sc = default_scenario("read_only", 100);
    sc.sim.workload.load_steps = {{150 * kMicrosPerSecond, 500}};
    sc.controller = ControllerKind::PowerTracer;
    const auto o = run_scenario(sc, &read_only_model());
    CHECK(o.fast_modulations == 2);
    std::size_t late = 0;
    for (const auto& d : o.decisions)
        if (d.reason == Reason::FastModulation && d.t > 150 * kMicrosPerSecond) late = std::max<std::size_t>(late, 1);
    CHECK(late == 1);
}

TEST_CASE("powertracer beats SimpleDVS at 500 clients on the same seed") {
    const auto& model = read_only_model();
    Scenario sc = default_scenario("read_only", 500);
    const auto info = measure_baseline(sc.sim, model.pattern_centroids, sc.k);
    const auto pt = run_controlled(sc, ControllerKind::PowerTracer, &model, info, 3.0, 5);
    const auto simple = run_controlled(sc, ControllerKind::SimpleDVS, &model, info, 3.0, 5);
    CHECK(pt.saving_pct > simple.saving_pct);
    CHECK(pt.thresholds.size() == 5);
    for (const auto& d : pt.decisions)
        if (d.reason != Reason::FastModulation && d.tier) CHECK(std::abs(d.new_level - d.old_level) == 1);
}

TEST_CASE("comparison plan validation and layout") {
    ExperimentPlan plan;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.controllers = {ControllerKind::Baseline, ControllerKind::SimpleDVS, ControllerKind::Ondemand,
                        ControllerKind::PowerTracerNP};
    plan.clients = {100, 200, 300, 400, 500};
    plan.factors = {3};
    plan.patterns = {5};
    plan.replicas = 0;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.replicas = 1;
    plan.jobs = 2;

    Scenario sc = default_scenario("read_only");
    sc.sim.workload.runtime_s = 60;
    const auto rows = run_comparison(sc, plan, nullptr);
    CHECK(rows.size() == 20);
    for (const auto& r : rows) {
        CHECK(r.error == "");
        CHECK(r.seed == replica_seed(1, 0));
        if (r.controller == ControllerKind::Baseline) CHECK(r.saving_pct == 0.0);
    }
    std::ostringstream a, b;
    write_comparison_csv(a, rows);
    plan.jobs = 1;
    write_comparison_csv(b, run_comparison(sc, plan, nullptr));
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("controller,clients,factor,patterns,replica,seed,saving_pct,", 0) == 0);

    plan.controllers = {ControllerKind::PowerTracer};
    CHECK_THROWS_AS(run_comparison(sc, plan, nullptr), ConfigError);
}

TEST_CASE("paired seeds differ across replicas only") {
    CHECK(replica_seed(1, 0) == 1);
    CHECK(replica_seed(1, 1) != replica_seed(1, 0));
    CHECK(replica_seed(1, 2) == replica_seed(1, 2));
}
