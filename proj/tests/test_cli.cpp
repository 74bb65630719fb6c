#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "tracedvfs/cluster_sim.hpp"
#include "tracedvfs/trace_model.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(TRACEDVFS_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int raw = pclose(pipe);
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("tracedvfs_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run("").status == 1);
    CHECK(run("fly").status == 1);
    CHECK(run("run --clients -3").status == 1);
    CHECK(run("--help").status == 0);
}

TEST_CASE("config errors exit 2") {
    const auto dir = scratch("cfg");
    const auto bad_controller = run("run --controller magic --out " + dir.string());
    CHECK(bad_controller.status == 2);
    CHECK(bad_controller.out.find("powertracer_np") != std::string::npos);
    CHECK(run("run --controller powertracer --out " + dir.string()).status == 2);
    CHECK(run("run --config /nonexistent.conf").status == 2);
    std::ofstream(dir / "bad.conf") << "clients = 10\nwhat = 1\n";
    const auto bad_key = run("run --config " + (dir / "bad.conf").string());
    CHECK(bad_key.status == 2);
    CHECK(bad_key.out.find("line 2") != std::string::npos);
    std::ofstream(dir / "bad_model") << "PREMODEL v1 M=3 N=1\n";
    CHECK(run("run --controller powertracer --model " + (dir / "bad_model").string()).status == 2);
    fs::remove_all(dir);
}

TEST_CASE("trace: empty log, incomplete log, parse errors, simulator log") {
    const auto dir = scratch("trace");
    std::ofstream(dir / "empty.log").close();
    const auto empty = run("trace --log " + (dir / "empty.log").string() + " --tiers 3");
    CHECK(empty.status == 0);
    CHECK(empty.out ==
          "window_start_us,pattern_id,first_msg_size,avg_latency_us,svc_t0_us,svc_t1_us,svc_t2_us,load_rps,fraction\n");

    std::ofstream(dir / "partial.log") << "10\tBEGIN\t0\tw\t-\t-\t-\t-\n20\tRECV\t0\tw\tclient\t1\t300\t-\n";
    const auto partial = run("trace --log " + (dir / "partial.log").string() + " --out " + (dir / "p.csv").string());
    CHECK(partial.status == 0);
    CHECK(partial.out.find("warning") != std::string::npos);
    const auto p = slurp(dir / "p.csv");
    CHECK(std::count(p.begin(), p.end(), '\n') == 1);

    std::ofstream(dir / "broken.log") << "10\tBEGIN\t0\tw\t-\t-\t-\t-\n20\tNOPE\t0\tw\t-\t-\t-\t-\n";
    const auto broken = run("trace --log " + (dir / "broken.log").string());
    CHECK(broken.status == 2);
    CHECK(broken.out.find("line 2") != std::string::npos);

    auto w = tracedvfs::read_only_workload(100);
    w.runtime_s = 30;
    const auto r = tracedvfs::run_sim(tracedvfs::SimConfig{tracedvfs::default_nodes(), w});
    std::ofstream(dir / "sim.log") << tracedvfs::write_log(r.activity_log);
    const auto sim = run("trace --log " + (dir / "sim.log").string() + " --k 10 --patterns 7 --out " +
                         (dir / "sim.csv").string());
    CHECK(sim.status == 0);
    const auto csv = slurp(dir / "sim.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
    fs::remove_all(dir);
}

TEST_CASE("profile, run and compare write their CSVs") {
    const auto dir = scratch("flow");
    std::ofstream(dir / "small.conf") << "workload = read_only\nclients = 200\nruntime_s = 60\n"
                                         "profile.clients = 50,100,150,200\nprofile.runtime_s = 30\n";
    const std::string cfg = "--config " + (dir / "small.conf").string();
    const auto prof = run("profile " + cfg + " --out " + (dir / "m").string());
    CHECK(prof.status == 0);
    CHECK(prof.out.find("min R2") != std::string::npos);
    CHECK(fs::exists(dir / "m" / "pre_model"));
    CHECK(slurp(dir / "m" / "pre_model").rfind("PREMODEL v1 M=3 N=7\n", 0) == 0);

    const std::string model = "--model " + (dir / "m" / "pre_model").string();
    const auto r = run("run " + cfg + " --controller powertracer " + model + " --patterns 3 --log --out " +
                       (dir / "r").string());
    CHECK(r.status == 0);
    for (const char* f : {"summary.csv", "decisions.csv", "power.csv", "activity.log"}) CHECK(fs::exists(dir / "r" / f));
    CHECK(slurp(dir / "r" / "decisions.csv").rfind("t_us,controller,direction,tier,old_level,new_level,reason,D1_us,D2_us,D3_us\n", 0) == 0);
    CHECK(slurp(dir / "r" / "power.csv").rfind("t_us,node0_w,node1_w,node2_w,total_w\n", 0) == 0);

    const auto c = run("compare " + cfg + " " + model +
                       " --controller powertracer,ondemand,baseline --clients 100,200 --factor 2,3 --jobs 2 --out " +
                       (dir / "c").string());
    CHECK(c.status == 0);
    const auto csv = slurp(dir / "c" / "comparison.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2 * 2);
    CHECK(fs::exists(dir / "c" / "comparison.txt"));
    fs::remove_all(dir);
}
