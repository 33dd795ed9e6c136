#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "jesp/cli.hpp"
#include "test_util.hpp"

using namespace jesp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("jesp_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_argv(std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "jesp");
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("a missing problem file exits with the usage code") {
    CHECK(run_argv({"solve", "--problem", "/nonexistent/nowhere.dpomdp"}) == kExitUsage);
    CHECK(run_argv({"eval", "--problem", "/nonexistent/nowhere.dpomdp", "--fsc", "x"}) ==
          kExitUsage);
}

TEST_CASE("solve writes a replayable run result and matching controller files") {
    TempDir tmp;
    const std::string out = tmp.file("run.json");
    const int rc = run_argv({"solve", "--problem", testutil::problem_path("recycling.dpomdp"),
                             "--init", "random", "--restarts", "2", "--seed", "5",
                             "--solver-timeout-s", "2", "--out", out});
    REQUIRE(rc == kExitOk);
    REQUIRE(fs::exists(out));
    auto j = nlohmann::json::parse(read_file(out));
    CHECK(j.at("config").at("init") == "random");
    CHECK(j.at("config").at("restarts") == 2);
    CHECK(j.at("restarts").size() == 2);
    const double reported = j.at("best_value").get<double>();

    // the emitted controllers re-evaluate to the reported value
    auto d = testutil::load_problem("recycling.dpomdp");
    std::vector<Fsc> fscs;
    for (int a = 0; a < 2; ++a) {
        const std::string p = tmp.file("run.agent" + std::to_string(a) + ".fsc.json");
        REQUIRE(fs::exists(p));
        fscs.push_back(fsc_from_json(nlohmann::json::parse(read_file(p)),
                                     d.action_labels[a], d.obs_labels[a], d.state_labels));
    }
    const double v = evaluate_joint(d, fscs, 1e-7);
    CHECK(std::abs(v - reported) <= 1e-6 + 2e-3);  // eval residual of the run
}

TEST_CASE("eval refuses controllers with mismatched alphabets") {
    TempDir tmp;
    // controller written against DecTiger observation labels
    auto d = testutil::load_problem("dectiger.dpomdp");
    Fsc f;
    f.num_actions = 3;
    f.num_obs = 2;
    FscNode n;
    n.action_dist = {{2, 1.0}};
    n.next.assign(2, {{0, 1.0}});
    f.nodes.push_back(n);
    const std::string p = tmp.file("listen.fsc.json");
    atomic_write_file(
        p, fsc_to_json(f, d.action_labels[0], d.obs_labels[0], d.state_labels).dump());
    // evaluating it on recycling (different labels) must fail cleanly
    CHECK(run_argv({"eval", "--problem", testutil::problem_path("recycling.dpomdp"),
                    "--fsc", p, "--fsc", p}) == kExitUsage);
    // on its own problem it works
    CHECK(run_argv({"eval", "--problem", testutil::problem_path("dectiger.dpomdp"),
                    "--fsc", p, "--fsc", p, "--simulate", "2000"}) == kExitOk);
}

TEST_CASE("compile-br emits a model that reparses exactly, plus a legend") {
    TempDir tmp;
    auto d = testutil::load_problem("dectiger.dpomdp");
    Fsc listen;
    listen.num_actions = 3;
    listen.num_obs = 2;
    FscNode n;
    n.action_dist = {{2, 1.0}};
    n.next.assign(2, {{0, 1.0}});
    listen.nodes.push_back(n);
    const std::string fsc_path = tmp.file("partner.fsc.json");
    atomic_write_file(fsc_path, fsc_to_json(listen, d.action_labels[1], d.obs_labels[1],
                                            d.state_labels)
                                    .dump());
    const std::string out = tmp.file("br.pomdp");
    REQUIRE(run_argv({"compile-br", "--problem", testutil::problem_path("dectiger.dpomdp"),
                      "--agent", "0", "--fsc", fsc_path, "--out", out}) == kExitOk);
    REQUIRE(fs::exists(out));
    REQUIRE(fs::exists(out + ".legend.tsv"));

    // 1-node partner: at most |S| * 1 * (|Omega_i| + 1) = 6 states pre-elimination
    auto brp = build_best_response(d, {listen}, 0);
    CHECK(brp.stats.pre_total == 6);

    Pomdp reparsed = to_pomdp(parse_dpomdp(read_file(out)));
    auto elim = eliminate_unreachable(brp);
    CHECK(reparsed.num_states() == elim.pomdp.num_states());
    CHECK(reparsed.transition == elim.pomdp.transition);
    CHECK(reparsed.observation == elim.pomdp.observation);
    CHECK(reparsed.reward == elim.pomdp.reward);
}

TEST_CASE("the capacity guard surfaces as its own exit code") {
    TempDir tmp;
    auto d = testutil::load_problem("dectiger.dpomdp");
    Fsc listen;
    listen.num_actions = 3;
    listen.num_obs = 2;
    FscNode n;
    n.action_dist = {{2, 1.0}};
    n.next.assign(2, {{0, 1.0}});
    listen.nodes.push_back(n);
    const std::string fsc_path = tmp.file("partner.fsc.json");
    atomic_write_file(fsc_path, fsc_to_json(listen, d.action_labels[1], d.obs_labels[1],
                                            d.state_labels)
                                    .dump());
    CHECK(run_argv({"compile-br", "--problem", testutil::problem_path("dectiger.dpomdp"),
                    "--agent", "0", "--fsc", fsc_path, "--out", tmp.file("x.pomdp"),
                    "--capacity", "2"}) == kExitCapacity);
}

TEST_CASE("unknown flags and missing subcommands exit with the usage code") {
    CHECK(run_argv({"solve", "--no-such-flag"}) == kExitUsage);
    CHECK(run_argv({}) == kExitUsage);
}
