#pragma once

#include <atomic>
#include <optional>
#include <thread>
#include <vector>

#include <json.hpp>

#include "jesp/best_response.hpp"
#include "jesp/extraction.hpp"
#include "jesp/fsc.hpp"
#include "jesp/model.hpp"
#include "jesp/pomdp_solver.hpp"
#include "jesp/util.hpp"

namespace jesp {

enum class InitMode { Random, MpomdpDeterministic, MpomdpStochastic };
enum class BrForm { Momdp, Lagged };

inline const char* to_string(InitMode m) {
    switch (m) {
        case InitMode::Random: return "random";
        case InitMode::MpomdpDeterministic: return "mpomdp-d";
        default: return "mpomdp-s";
    }
}
inline const char* to_string(BrForm f) { return f == BrForm::Momdp ? "momdp" : "lagged"; }

struct RunConfig {
    InitMode init = InitMode::MpomdpDeterministic;
    int restarts = 1;
    double restart_timeout_seconds = 7200.0;
    SolverConfig solver;
    double eval_eps = 1e-3;
    double accept_margin = 1e-9;
    int max_init_nodes = 5;  // K, bounds random initial controllers only
    std::uint64_t seed = 0;
    BrForm br_form = BrForm::Momdp;
    long br_capacity = br_detail::kDefaultCapacity;
    int max_iterations = 0;  // 0 = run to convergence; smoke tests set 1
    int jobs = 1;

    void validate() const {
        if (restarts < 1) throw ModelError("restarts must be at least 1");
        if (eval_eps <= 0) throw ModelError("eval_eps must be positive");
        if (max_init_nodes < 1) throw ModelError("max_init_nodes must be at least 1");
        solver.validate();
    }

    /// Restarts are pointless when the whole pipeline is deterministic.
    int effective_restarts() const { return init == InitMode::Random ? restarts : 1; }
};

struct IterationRecord {
    int iteration = 0;
    int agent = 0;
    double candidate_value = 0;
    bool accepted = false;
    std::vector<int> fsc_sizes;  // per agent, after this iteration
    long br_pre_total = 0, br_pre_core = 0, br_post_total = 0, br_post_core = 0;
    double solver_lb = 0, solver_ub = 0;
    bool solver_converged = false;
    long solver_trials = 0;
    double elapsed_seconds = 0;  // diagnostic; excluded from trace comparisons
};

struct LocalSearchResult {
    std::vector<Fsc> fscs;
    double value = 0;
    std::vector<IterationRecord> trace;
    bool converged = false;  // consecutive non-improvements reached |I|
    double wall_seconds = 0;
    std::vector<double> eps_nash_slack;  // per agent; filled when converged
};

struct RunResult {
    RunConfig config;
    std::vector<LocalSearchResult> restarts;
    int best_index = -1;
    double best_value = 0;
    double wall_seconds = 0;
    double init_seconds = 0;
};

namespace jesp_detail {

inline std::vector<Fsc> others(const std::vector<Fsc>& fscs, int agent) {
    std::vector<Fsc> out;
    out.reserve(fscs.size() - 1);
    for (size_t j = 0; j < fscs.size(); ++j)
        if (static_cast<int>(j) != agent) out.push_back(fscs[j]);
    return out;
}

struct BrOutcome {
    Fsc candidate;
    BrStats stats;
    double solver_lb = 0, solver_ub = 0;
    bool solver_converged = false;
    long solver_trials = 0;
};

inline BrOutcome solve_best_response(const DecPomdp& d, const std::vector<Fsc>& fscs,
                                     int agent, const RunConfig& cfg) {
    BestResponsePomdp brp =
        cfg.br_form == BrForm::Momdp
            ? build_best_response(d, others(fscs, agent), agent, cfg.br_capacity)
            : build_best_response_lagged(d, others(fscs, agent), agent, cfg.br_capacity);
    brp = eliminate_unreachable(brp);
    SolveResult sres = solve(brp.pomdp, cfg.solver);
    BrOutcome out;
    out.candidate = extract_fsc(sres.gamma_set, brp.pomdp, brp.pomdp.initial_belief);
    out.candidate.agent = agent;
    out.candidate.belief_labels = brp.pomdp.state_labels;
    out.stats = brp.stats;
    out.solver_lb = sres.lb_at_b0;
    out.solver_ub = sres.ub_at_b0;
    out.solver_converged = sres.converged;
    out.solver_trials = sres.iterations;
    return out;
}

}  // namespace jesp_detail

/// Round-robin best-response improvement: each iteration compiles agent i's
/// best-response POMDP against the other agents' fixed controllers, solves
/// it, extracts a candidate controller, and adopts it only if the joint
/// value improves. Stops when |I| consecutive iterations brought no
/// improvement, or on the restart timeout (converged=false then).
inline LocalSearchResult local_search(const DecPomdp& d, std::vector<Fsc> fscs,
                                      const RunConfig& cfg) {
    cfg.validate();
    Stopwatch watch;
    const int I = d.num_agents;
    LocalSearchResult res;
    res.value = evaluate_joint(d, fscs, cfg.eval_eps);

    int non_improving = 0;
    int agent = 0;
    int iteration = 0;
    bool timed_out = false;
    while (non_improving < I) {
        if (cfg.max_iterations > 0 && iteration >= cfg.max_iterations) break;
        if (watch.elapsed() > cfg.restart_timeout_seconds) {
            timed_out = true;
            break;
        }
        auto outcome = jesp_detail::solve_best_response(d, fscs, agent, cfg);
        std::vector<Fsc> candidate = fscs;
        candidate[agent] = outcome.candidate;
        const double v = evaluate_joint(d, candidate, cfg.eval_eps);
        const bool accepted = v > res.value + cfg.accept_margin;
        if (accepted) {
            fscs = std::move(candidate);
            res.value = v;
            non_improving = 0;
        } else {
            ++non_improving;
        }
        IterationRecord rec;
        rec.iteration = iteration;
        rec.agent = agent;
        rec.candidate_value = v;
        rec.accepted = accepted;
        for (const Fsc& f : fscs) rec.fsc_sizes.push_back(f.size());
        rec.br_pre_total = outcome.stats.pre_total;
        rec.br_pre_core = outcome.stats.pre_core;
        rec.br_post_total = outcome.stats.post_total;
        rec.br_post_core = outcome.stats.post_core;
        rec.solver_lb = outcome.solver_lb;
        rec.solver_ub = outcome.solver_ub;
        rec.solver_converged = outcome.solver_converged;
        rec.solver_trials = outcome.solver_trials;
        rec.elapsed_seconds = watch.elapsed();
        res.trace.push_back(std::move(rec));
        agent = (agent + 1) % I;
        ++iteration;
    }
    res.converged = (non_improving >= I) && !timed_out;
    res.fscs = std::move(fscs);

    if (res.converged) {
        // certificate: how much any single agent could still gain by
        // re-solving its best response once more
        for (int i = 0; i < I; ++i) {
            auto outcome = jesp_detail::solve_best_response(d, res.fscs, i, cfg);
            std::vector<Fsc> candidate = res.fscs;
            candidate[i] = outcome.candidate;
            const double v = evaluate_joint(d, candidate, cfg.eval_eps);
            res.eps_nash_slack.push_back(v - res.value);
        }
    }
    res.wall_seconds = watch.elapsed();
    return res;
}

/// Builds the initial controllers for one restart.
inline std::vector<Fsc> make_initial_fscs(const DecPomdp& d, const RunConfig& cfg,
                                          int restart_index) {
    std::vector<Fsc> fscs;
    if (cfg.init == InitMode::Random) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(restart_index)));
        for (int i = 0; i < d.num_agents; ++i) {
            Fsc f = random_fsc(d.num_actions(i), d.num_obs(i), cfg.max_init_nodes, rng);
            f.agent = i;
            fscs.push_back(std::move(f));
        }
        return fscs;
    }
    const Pomdp mp = flatten_mpomdp(d);
    const SolveResult sres = solve(mp, cfg.solver);
    const InitVariant variant = cfg.init == InitMode::MpomdpDeterministic
                                    ? InitVariant::Deterministic
                                    : InitVariant::Stochastic;
    for (int i = 0; i < d.num_agents; ++i) {
        Fsc f = extract_initial_fsc(sres.gamma_set, mp, d, i, variant);
        f.belief_labels = d.state_labels;
        fscs.push_back(std::move(f));
    }
    return fscs;
}

/// Runs `restarts` independent local searches (a single one for the
/// deterministic centralized initializations) and returns them all plus the
/// best by value, ties resolved toward the lowest restart index.
inline RunResult run(const DecPomdp& d, const RunConfig& cfg) {
    cfg.validate();
    Stopwatch watch;
    RunResult out;
    out.config = cfg;
    const int n = cfg.effective_restarts();
    out.restarts.resize(n);

    std::optional<std::vector<Fsc>> shared_init;
    if (cfg.init != InitMode::Random) {
        Stopwatch init_watch;
        shared_init = make_initial_fscs(d, cfg, 0);
        out.init_seconds = init_watch.elapsed();
    }

    const int jobs = std::max(1, std::min(cfg.jobs, n));
    if (jobs == 1) {
        for (int r = 0; r < n; ++r) {
            auto init = shared_init ? *shared_init : make_initial_fscs(d, cfg, r);
            out.restarts[r] = local_search(d, std::move(init), cfg);
        }
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            while (true) {
                const int r = next.fetch_add(1);
                if (r >= n) return;
                auto init = shared_init ? *shared_init : make_initial_fscs(d, cfg, r);
                out.restarts[r] = local_search(d, std::move(init), cfg);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    out.best_index = 0;
    for (int r = 1; r < n; ++r)
        if (out.restarts[r].value > out.restarts[out.best_index].value) out.best_index = r;
    out.best_value = out.restarts[out.best_index].value;
    out.wall_seconds = watch.elapsed();
    return out;
}

// ------------------------------------------------------------- file forms

inline nlohmann::json to_json(const SolverConfig& c) {
    return {{"eps_target", c.eps_target},
            {"timeout_seconds", c.timeout_seconds},
            {"max_trials", c.max_trials},
            {"max_alpha_vectors", c.max_alpha_vectors},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"init", to_string(c.init)},
            {"restarts", c.restarts},
            {"restart_timeout_seconds", c.restart_timeout_seconds},
            {"solver", to_json(c.solver)},
            {"eval_eps", c.eval_eps},
            {"accept_margin", c.accept_margin},
            {"max_init_nodes", c.max_init_nodes},
            {"seed", c.seed},
            {"br_form", to_string(c.br_form)},
            {"max_iterations", c.max_iterations},
            {"jobs", c.jobs}};
}

inline nlohmann::json to_json(const IterationRecord& r, bool with_timing) {
    nlohmann::json j{{"iteration", r.iteration},
                     {"agent", r.agent},
                     {"candidate_value", r.candidate_value},
                     {"accepted", r.accepted},
                     {"fsc_sizes", r.fsc_sizes},
                     {"br_pre_total", r.br_pre_total},
                     {"br_pre_core", r.br_pre_core},
                     {"br_post_total", r.br_post_total},
                     {"br_post_core", r.br_post_core},
                     {"solver_lb", r.solver_lb},
                     {"solver_ub", r.solver_ub},
                     {"solver_converged", r.solver_converged},
                     {"solver_trials", r.solver_trials}};
    if (with_timing) j["elapsed_seconds"] = r.elapsed_seconds;
    return j;
}

/// Semantic trace of a search; timing fields are optional so replay
/// comparisons can be exact.
inline nlohmann::json trace_to_json(const LocalSearchResult& r, bool with_timing) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& rec : r.trace) trace.push_back(to_json(rec, with_timing));
    nlohmann::json j{{"value", r.value},
                     {"converged", r.converged},
                     {"trace", trace},
                     {"eps_nash_slack", r.eps_nash_slack}};
    if (with_timing) j["wall_seconds"] = r.wall_seconds;
    return j;
}

inline nlohmann::json run_result_to_json(const DecPomdp& d, const RunResult& r,
                                         bool with_timing = true) {
    nlohmann::json restarts = nlohmann::json::array();
    for (size_t i = 0; i < r.restarts.size(); ++i) {
        nlohmann::json jr = trace_to_json(r.restarts[i], with_timing);
        jr["restart"] = i;
        nlohmann::json fscs = nlohmann::json::array();
        for (int a = 0; a < d.num_agents; ++a) {
            const Fsc& f = r.restarts[i].fscs[a];
            fscs.push_back(fsc_to_json(f, d.action_labels[a], d.obs_labels[a],
                                       f.belief_labels.empty() ? d.state_labels
                                                               : f.belief_labels));
        }
        jr["fscs"] = fscs;
        restarts.push_back(std::move(jr));
    }
    nlohmann::json j{{"config", to_json(r.config)},
                     {"best_index", r.best_index},
                     {"best_value", r.best_value},
                     {"restarts", restarts}};
    if (with_timing) {
        j["wall_seconds"] = r.wall_seconds;
        j["init_seconds"] = r.init_seconds;
    }
    return j;
}

}  // namespace jesp
