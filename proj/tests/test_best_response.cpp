#include <catch_amalgamated.hpp>

#include "jesp/best_response.hpp"
#include "jesp/pomdp_solver.hpp"
#include "test_util.hpp"

using namespace jesp;

namespace {

Fsc det_fsc(Rng& rng, int num_actions, int num_obs, int max_nodes) {
    return random_fsc(num_actions, num_obs, max_nodes, rng);
}

Fsc listen_node(const DecPomdp& d, int agent) {
    Fsc f;
    f.agent = agent;
    f.num_actions = d.num_actions(agent);
    f.num_obs = d.num_obs(agent);
    FscNode n;
    n.action_dist = {{2, 1.0}};
    n.next.assign(f.num_obs, {{0, 1.0}});
    f.nodes.push_back(n);
    return f;
}

}  // namespace

TEST_CASE("the extended state space has the documented size") {
    auto d = testutil::load_problem("dectiger.dpomdp");
    Rng rng(4);
    Fsc partner = det_fsc(rng, 3, 2, 3);
    while (partner.size() != 3) partner = det_fsc(rng, 3, 2, 3);
    auto brp = build_best_response(d, {partner}, 0);
    CHECK(brp.stats.pre_total == 2 * 3 * 3);  // |S| * |N| * (|Omega_i| + 1)
    CHECK(brp.stats.pre_core == 2 * 3 * 2);
    CHECK(brp.pomdp.num_states() == 18);
    brp.pomdp.validate();
}

TEST_CASE("the compiled model is a valid POMDP even with stochastic partners") {
    auto d = testutil::load_problem("recycling.dpomdp");
    Rng rng(21);
    Fsc partner = testutil::random_stochastic_fsc(rng, 3, 2, 3);
    auto brp = build_best_response(d, {partner}, 0);
    brp.pomdp.validate();  // checks every T_e and O_e row sums to one
    // the observation function is deterministic outside the sentinel layer
    for (int a = 0; a < brp.pomdp.num_actions(); ++a)
        for (int s = 0; s < brp.pomdp.num_states(); ++s) {
            if (brp.states[s].own_obs < 0) continue;
            const auto& row = brp.pomdp.obs_row(a, s);
            REQUIRE(row.size() == 1);
            CHECK(row.front().first == brp.states[s].own_obs);
        }
}

TEST_CASE("fixed-controller value in the compiled model equals the joint value") {
    // the correctness keystone of the construction
    Rng rng(99);
    for (const char* name : {"dectiger.dpomdp", "recycling.dpomdp"}) {
        auto d = testutil::load_problem(name);
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<Fsc> fscs = {det_fsc(rng, 3, 2, 4), det_fsc(rng, 3, 2, 4)};
            const int agent = rep % 2;
            auto brp = eliminate_unreachable(
                build_best_response(d, {fscs[1 - agent]}, agent));
            const double eps = 1e-4;
            auto t = evaluate_fsc(brp.pomdp, fscs[agent], eps);
            const double via_br = t.value_at(brp.pomdp.initial_belief, 0);
            std::vector<Fsc> ordered = agent == 0
                                           ? fscs
                                           : std::vector<Fsc>{fscs[1], fscs[0]};
            const double joint = evaluate_joint(d, ordered, eps);
            INFO(name << " rep " << rep);
            CHECK(std::abs(via_br - joint) <= 2 * eps / (1 - d.discount));
        }
    }
}

TEST_CASE("stochastic partners also satisfy the keystone equality") {
    auto d = testutil::load_problem("recycling.dpomdp");
    Rng rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        Fsc partner = testutil::random_stochastic_fsc(rng, 3, 2, 2);
        Fsc mine = det_fsc(rng, 3, 2, 3);
        auto brp = eliminate_unreachable(build_best_response(d, {partner}, 0));
        const double eps = 1e-5;
        auto t = evaluate_fsc(brp.pomdp, mine, eps);
        const double via_br = t.value_at(brp.pomdp.initial_belief, 0);
        const double joint = evaluate_joint(d, {mine, partner}, eps);
        CHECK(std::abs(via_br - joint) <= 2 * eps / (1 - d.discount));
    }
}

TEST_CASE("solving the best response against a listener dominates listening") {
    auto d = testutil::load_problem("dectiger.dpomdp");
    auto brp = eliminate_unreachable(build_best_response(d, {listen_node(d, 1)}, 0));
    SolverConfig cfg;
    cfg.eps_target = 1e-3;
    cfg.timeout_seconds = 10;
    auto res = solve(brp.pomdp, cfg);
    CHECK(res.lb_at_b0 >= -20.0 - 1e-3);
}

TEST_CASE("unreachable-state elimination") {
    auto d = testutil::load_problem("dectiger.dpomdp");
    Rng rng(13);

    SECTION("DecTiger loses nothing outside the sentinel layer") {
        for (int rep = 0; rep < 5; ++rep) {
            Fsc partner = det_fsc(rng, 3, 2, 4);
            // keep only controllers whose every node is used somewhere
            auto brp = build_best_response(d, {partner}, 0);
            auto elim = eliminate_unreachable(brp);
            // nodes unreachable inside the partner controller itself shrink
            // the product space; count the reachable ones
            std::vector<char> seen(partner.size(), 0);
            std::vector<int> stack = {0};
            seen[0] = 1;
            while (!stack.empty()) {
                int n = stack.back();
                stack.pop_back();
                for (int o = 0; o < partner.num_obs; ++o)
                    for (const auto& [n2, p] : partner.nodes[n].next[o])
                        if (!seen[n2]) {
                            seen[n2] = 1;
                            stack.push_back(n2);
                        }
            }
            long live_nodes = 0;
            for (char c : seen) live_nodes += c;
            CHECK(elim.stats.post_core == 2 * live_nodes * 2);
        }
    }

    SECTION("elimination is idempotent and value-preserving") {
        Fsc partner = det_fsc(rng, 3, 2, 3);
        Fsc mine = det_fsc(rng, 3, 2, 3);
        auto brp = build_best_response(d, {partner}, 1);
        auto once = eliminate_unreachable(brp);
        auto twice = eliminate_unreachable(once);
        CHECK(once.pomdp.num_states() == twice.pomdp.num_states());
        CHECK(once.pomdp.transition == twice.pomdp.transition);
        const double eps = 1e-9;
        auto t0 = evaluate_fsc(brp.pomdp, mine, eps);
        auto t1 = evaluate_fsc(once.pomdp, mine, eps);
        const double v0 = t0.value_at(brp.pomdp.initial_belief, 0);
        const double v1 = t1.value_at(once.pomdp.initial_belief, 0);
        CHECK(std::abs(v0 - v1) <= 1e-10);
    }
}

TEST_CASE("capacity guards trip before building huge spaces") {
    auto d = testutil::load_problem("dectiger.dpomdp");
    Rng rng(1);
    Fsc partner = det_fsc(rng, 3, 2, 3);
    CHECK_THROWS_AS(build_best_response(d, {partner}, 0, 4), CapacityExceeded);
    CHECK_THROWS_AS(build_best_response_lagged(d, {partner}, 0, 4), CapacityExceeded);
}

TEST_CASE("the lagged formalization") {
    auto d = testutil::load_problem("dectiger.dpomdp");
    Rng rng(77);

    SECTION("state count and observation normalization") {
        Fsc partner = det_fsc(rng, 3, 2, 3);
        while (partner.size() != 3) partner = det_fsc(rng, 3, 2, 3);
        auto brp = build_best_response_lagged(d, {partner}, 0);
        CHECK(brp.stats.pre_total == 2 * 3 * 3);  // |S| * |N| * (|Omega_j| + 1)
        brp.pomdp.validate();                     // includes row normalization
    }

    SECTION("fixed controllers have the same value under both formalizations") {
        for (int rep = 0; rep < 20; ++rep) {
            Fsc partner = det_fsc(rng, 3, 2, 3);
            Fsc mine = det_fsc(rng, 3, 2, 3);
            const double eps = 1e-5;
            auto a = eliminate_unreachable(build_best_response(d, {partner}, 0));
            auto b = eliminate_unreachable(build_best_response_lagged(d, {partner}, 0));
            const double va =
                evaluate_fsc(a.pomdp, mine, eps).value_at(a.pomdp.initial_belief, 0);
            const double vb =
                evaluate_fsc(b.pomdp, mine, eps).value_at(b.pomdp.initial_belief, 0);
            CHECK(std::abs(va - vb) <= 2 * eps / (1 - d.discount));
        }
    }

    SECTION("stochastic action rules are rejected") {
        Fsc sto = testutil::random_stochastic_fsc(rng, 3, 2, 2);
        CHECK_THROWS_AS(build_best_response_lagged(d, {sto}, 0),
                        StochasticActionRuleUnsupported);
    }
}
