#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jesp/best_response.hpp"
#include "jesp/dpomdp_parser.hpp"
#include "jesp/extraction.hpp"
#include "jesp/fsc.hpp"
#include "jesp/local_search.hpp"
#include "jesp/model.hpp"
#include "jesp/pomdp_solver.hpp"
#include "jesp/util.hpp"

namespace jesp {

// exit codes shared by every subcommand
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;    // parse/config errors
constexpr int kExitTimeout = 3;  // timed out without producing any result
constexpr int kExitCapacity = 4;

namespace cli_detail {

inline InitMode parse_init(const std::string& s) {
    if (s == "random") return InitMode::Random;
    if (s == "mpomdp-d") return InitMode::MpomdpDeterministic;
    if (s == "mpomdp-s") return InitMode::MpomdpStochastic;
    throw ModelError("unknown init mode: " + s);
}

inline BrForm parse_br_form(const std::string& s) {
    if (s == "momdp") return BrForm::Momdp;
    if (s == "lagged") return BrForm::Lagged;
    throw ModelError("unknown best-response form: " + s);
}

inline std::string sibling_path(const std::string& base, const std::string& suffix) {
    std::filesystem::path p(base);
    std::filesystem::path out = p.parent_path() / (p.stem().string() + suffix);
    return out.string();
}

inline int simulate_horizon(const DecPomdp& d, double tail) {
    double rmax = 1.0;
    for (double r : d.reward) rmax = std::max(rmax, std::abs(r));
    const double h = std::log(tail * (1 - d.discount) / rmax) / std::log(d.discount);
    return std::min(10000, std::max(10, static_cast<int>(std::ceil(h))));
}

inline std::vector<Fsc> load_fscs(const std::vector<std::string>& paths, const DecPomdp& d,
                                  const std::vector<int>& agents) {
    std::vector<Fsc> fscs;
    for (size_t k = 0; k < paths.size(); ++k) {
        const int agent = agents[k];
        nlohmann::json j = nlohmann::json::parse(read_file(paths[k]));
        Fsc f = fsc_from_json(j, d.action_labels[agent], d.obs_labels[agent],
                              d.state_labels);
        f.agent = agent;
        fscs.push_back(std::move(f));
    }
    return fscs;
}

}  // namespace cli_detail

struct SolveArgs {
    std::string problem;
    std::string init = "mpomdp-d";
    int restarts = 1;
    std::uint64_t seed = 0;
    std::optional<double> gamma;
    double solver_timeout_s = 5.0;
    double solver_eps = 1e-3;
    double eval_eps = 1e-3;
    double restart_timeout_s = 7200.0;
    int max_init_nodes = 5;
    std::string br_form = "momdp";
    std::string out = "run.json";
    int jobs = 1;
    int max_iterations = 0;
    bool dot = false;
};

inline int cmd_solve(const SolveArgs& args) {
    DecPomdp d;
    RunConfig cfg;
    try {
        d = parse_dpomdp_file(args.problem, nullptr, args.gamma);
        cfg.init = cli_detail::parse_init(args.init);
        cfg.restarts = args.restarts;
        cfg.seed = args.seed;
        cfg.solver.timeout_seconds = args.solver_timeout_s;
        cfg.solver.eps_target = args.solver_eps;
        cfg.eval_eps = args.eval_eps;
        cfg.restart_timeout_seconds = args.restart_timeout_s;
        cfg.max_init_nodes = args.max_init_nodes;
        cfg.br_form = cli_detail::parse_br_form(args.br_form);
        cfg.jobs = args.jobs;
        cfg.max_iterations = args.max_iterations;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        RunResult res = run(d, cfg);
        atomic_write_file(args.out, run_result_to_json(d, res).dump(2) + "\n");
        const auto& best = res.restarts[res.best_index];
        for (int a = 0; a < d.num_agents; ++a) {
            const Fsc& f = best.fscs[a];
            const auto& labels =
                f.belief_labels.empty() ? d.state_labels : f.belief_labels;
            atomic_write_file(
                cli_detail::sibling_path(args.out, ".agent" + std::to_string(a) +
                                                       ".fsc.json"),
                fsc_to_json(f, d.action_labels[a], d.obs_labels[a], labels).dump(2) + "\n");
            if (args.dot)
                atomic_write_file(cli_detail::sibling_path(
                                      args.out, ".agent" + std::to_string(a) + ".dot"),
                                  fsc_to_dot(f, d.action_labels[a], d.obs_labels[a]));
        }
        std::cout << "best value " << format_double(res.best_value) << " (restart "
                  << res.best_index << ", " << format_double(res.wall_seconds) << " s)\n";
        bool any_result = false;
        for (const auto& r : res.restarts)
            if (r.converged || !r.trace.empty()) any_result = true;
        return any_result ? kExitOk : kExitTimeout;
    } catch (const CapacityExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCapacity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

struct EvalArgs {
    std::string problem;
    std::vector<std::string> fsc_paths;  // one per agent, in agent order
    double eval_eps = 1e-3;
    long simulate_episodes = 0;
    int horizon = 0;  // 0 = derived from the discount and reward scale
    std::uint64_t seed = 0;
    std::optional<double> gamma;
};

inline int cmd_eval(const EvalArgs& args) {
    try {
        DecPomdp d = parse_dpomdp_file(args.problem, nullptr, args.gamma);
        if (static_cast<int>(args.fsc_paths.size()) != d.num_agents) {
            std::cerr << "error: need one --fsc per agent (" << d.num_agents << ")\n";
            return kExitUsage;
        }
        std::vector<int> agents(d.num_agents);
        for (int i = 0; i < d.num_agents; ++i) agents[i] = i;
        std::vector<Fsc> fscs = cli_detail::load_fscs(args.fsc_paths, d, agents);
        const double v = evaluate_joint(d, fscs, args.eval_eps);
        std::cout << "value " << format_double(v) << "\n";
        if (args.simulate_episodes > 0) {
            Rng rng(args.seed);
            const int horizon = args.horizon > 0
                                    ? args.horizon
                                    : cli_detail::simulate_horizon(d, args.eval_eps);
            auto sim = simulate(d, fscs, args.simulate_episodes, horizon, rng);
            std::cout << "simulated " << format_double(sim.mean) << " +/- "
                      << format_double(sim.std_error) << " (" << sim.episodes
                      << " episodes, horizon " << horizon << ")\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

struct CompileBrArgs {
    std::string problem;
    int agent = 0;
    std::vector<std::string> fsc_paths;  // one per other agent, in agent order
    std::string br_form = "momdp";
    std::string out = "br.pomdp";
    std::optional<double> gamma;
    long capacity = br_detail::kDefaultCapacity;
};

inline int cmd_compile_br(const CompileBrArgs& args) {
    DecPomdp d;
    std::vector<Fsc> partners;
    BrForm form;
    try {
        d = parse_dpomdp_file(args.problem, nullptr, args.gamma);
        form = cli_detail::parse_br_form(args.br_form);
        if (args.agent < 0 || args.agent >= d.num_agents) {
            std::cerr << "error: agent index out of range\n";
            return kExitUsage;
        }
        if (static_cast<int>(args.fsc_paths.size()) != d.num_agents - 1) {
            std::cerr << "error: need one --fsc per other agent ("
                      << d.num_agents - 1 << ")\n";
            return kExitUsage;
        }
        std::vector<int> agents;
        for (int j = 0; j < d.num_agents; ++j)
            if (j != args.agent) agents.push_back(j);
        partners = cli_detail::load_fscs(args.fsc_paths, d, agents);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        BestResponsePomdp brp =
            form == BrForm::Momdp
                ? build_best_response(d, partners, args.agent, args.capacity)
                : build_best_response_lagged(d, partners, args.agent, args.capacity);
        brp = eliminate_unreachable(brp);
        atomic_write_file(args.out, emit_pomdp(brp.pomdp));
        std::string legend = "index\tlabel\n";
        for (int s = 0; s < brp.pomdp.num_states(); ++s)
            legend += std::to_string(s) + "\t" + brp.pomdp.state_labels[s] + "\n";
        atomic_write_file(args.out + ".legend.tsv", legend);
        std::cout << "states " << brp.stats.pre_total << " -> " << brp.stats.post_total
                  << " (core " << brp.stats.pre_core << " -> " << brp.stats.post_core
                  << ", ratio " << format_double(brp.stats.core_ratio()) << ")\n";
        return kExitOk;
    } catch (const CapacityExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCapacity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

// ------------------------------------------------------------------ bench

struct BenchRowSpec {
    std::string problem;     // file stem under the suite directory
    InitMode init;
    int restarts;
    double solver_timeout_s;
    double threshold;        // required final value; NaN = smoke only
    double reference;        // published value the row is compared against
    int max_iterations;      // 0 = full run
    bool required;
};

struct BenchRowResult {
    BenchRowSpec spec;
    bool ran = false;
    double value = 0;
    std::vector<int> fsc_sizes;
    long iterations = 0;
    double wall_s = 0;
    double elim_ratio = 0;
    bool passed = false;
};

inline std::vector<BenchRowSpec> default_bench_rows() {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {
        {"dectiger", InitMode::MpomdpDeterministic, 1, 5.0, 13.4, 13.44, 0, true},
        {"recycling", InitMode::Random, 100, 5.0, 31.0, 31.62, 0, true},
        {"grid3x3", InitMode::MpomdpDeterministic, 1, 30.0, 5.7, 5.81, 0, true},
        {"boxpushing", InitMode::MpomdpDeterministic, 1, 3.0, nan, 220.25, 1, false},
        {"marsrover", InitMode::MpomdpDeterministic, 1, 3.0, nan, 26.91, 1, false},
    };
}

struct BenchArgs {
    std::string suite;
    std::string out = "bench.csv";
    int jobs = 1;
    std::uint64_t seed = 1;
    double gamma = 0.9;
};

inline int cmd_bench(const BenchArgs& args) {
    namespace fs = std::filesystem;
    auto rows = default_bench_rows();
    std::vector<std::string> missing;
    for (const auto& r : rows) {
        if (r.required && !fs::exists(fs::path(args.suite) / (r.problem + ".dpomdp")))
            missing.push_back(r.problem + ".dpomdp");
    }
    if (!missing.empty()) {
        std::cerr << "error: missing required problem files:";
        for (const auto& m : missing) std::cerr << " " << m;
        std::cerr << "\n";
        return kExitUsage;
    }

    std::vector<BenchRowResult> results;
    for (const auto& spec : rows) {
        const fs::path path = fs::path(args.suite) / (spec.problem + ".dpomdp");
        BenchRowResult row;
        row.spec = spec;
        if (!fs::exists(path)) {
            results.push_back(row);
            continue;
        }
        DecPomdp d = parse_dpomdp_file(path.string(), nullptr, args.gamma);
        RunConfig cfg;
        cfg.init = spec.init;
        cfg.restarts = spec.restarts;
        cfg.seed = args.seed;
        cfg.solver.timeout_seconds = spec.solver_timeout_s;
        cfg.max_iterations = spec.max_iterations;
        cfg.jobs = args.jobs;
        RunResult res = run(d, cfg);
        const auto& best = res.restarts[res.best_index];
        row.ran = true;
        row.value = res.best_value;
        for (const auto& f : best.fscs) row.fsc_sizes.push_back(f.size());
        row.iterations = static_cast<long>(best.trace.size());
        row.wall_s = res.wall_seconds;
        double ratio_sum = 0;
        long ratio_n = 0;
        for (const auto& rec : best.trace)
            if (rec.br_post_core > 0) {
                ratio_sum += static_cast<double>(rec.br_pre_core) / rec.br_post_core;
                ++ratio_n;
            }
        row.elim_ratio = ratio_n ? ratio_sum / ratio_n : 0.0;
        row.passed = std::isnan(spec.threshold) ? true : row.value >= spec.threshold;
        results.push_back(row);
    }

    // CSV (fixed column order) and a human-readable table
    std::string csv =
        "problem,init,restarts,seed,gamma,value,ref_value,threshold,passed,fsc_sizes,"
        "iterations,wall_s,elim_ratio\n";
    for (const auto& r : results) {
        if (!r.ran) continue;
        std::string sizes;
        for (size_t i = 0; i < r.fsc_sizes.size(); ++i)
            sizes += (i ? "x" : "") + std::to_string(r.fsc_sizes[i]);
        csv += r.spec.problem;
        csv += "," + std::string(to_string(r.spec.init));
        csv += "," + std::to_string(r.spec.restarts);
        csv += "," + std::to_string(args.seed);
        csv += "," + format_double(args.gamma);
        csv += "," + format_double(r.value);
        csv += "," + format_double(r.spec.reference);
        csv += "," + (std::isnan(r.spec.threshold) ? std::string("")
                                                   : format_double(r.spec.threshold));
        csv += "," + std::string(r.passed ? "1" : "0");
        csv += "," + sizes;
        csv += "," + std::to_string(r.iterations);
        csv += "," + format_double(r.wall_s);
        csv += "," + format_double(r.elim_ratio);
        csv += "\n";
    }
    atomic_write_file(args.out, csv);

    std::printf("%-12s %-9s %9s %9s %9s %6s %10s %8s\n", "problem", "init", "value",
                "reference", "threshold", "pass", "fsc", "ratio");
    bool all_passed = true;
    for (const auto& r : results) {
        if (!r.ran) continue;
        std::string sizes;
        for (size_t i = 0; i < r.fsc_sizes.size(); ++i)
            sizes += (i ? "x" : "") + std::to_string(r.fsc_sizes[i]);
        std::printf("%-12s %-9s %9.3f %9.3f %9.3f %6s %10s %8.2f\n", r.spec.problem.c_str(),
                    to_string(r.spec.init), r.value, r.spec.reference, r.spec.threshold,
                    r.passed ? "yes" : "NO", sizes.c_str(), r.elim_ratio);
        if (r.spec.required && !r.passed) all_passed = false;
    }
    return all_passed ? kExitOk : 1;
}

// ----------------------------------------------------------------- driver

inline int run_cli(int argc, char** argv) {
    CLI::App app{"Infinite-horizon Dec-POMDP solving by iterated best-response "
                 "controller search"};
    app.require_subcommand(1);

    SolveArgs sa;
    double sa_gamma = -1;
    auto* solve_cmd = app.add_subcommand("solve", "run the full solver on a problem");
    solve_cmd->add_option("--problem", sa.problem, "problem file (.dpomdp)")->required();
    solve_cmd->add_option("--init", sa.init, "random|mpomdp-d|mpomdp-s");
    solve_cmd->add_option("--restarts", sa.restarts, "independent restarts (random init)");
    solve_cmd->add_option("--seed", sa.seed, "master seed");
    solve_cmd->add_option("--gamma", sa_gamma, "discount override");
    solve_cmd->add_option("--solver-timeout-s", sa.solver_timeout_s, "per-solve budget");
    solve_cmd->add_option("--solver-eps", sa.solver_eps, "solver gap target");
    solve_cmd->add_option("--eval-eps", sa.eval_eps, "evaluation residual");
    solve_cmd->add_option("--restart-timeout-s", sa.restart_timeout_s, "per-restart budget");
    solve_cmd->add_option("--max-init-nodes", sa.max_init_nodes,
                          "random initial controller size bound");
    solve_cmd->add_option("--br-form", sa.br_form, "momdp|lagged");
    solve_cmd->add_option("--out", sa.out, "run-result file");
    solve_cmd->add_option("--jobs", sa.jobs, "parallel restarts");
    solve_cmd->add_option("--max-iterations", sa.max_iterations,
                          "stop each restart after this many iterations (0 = off)");
    solve_cmd->add_flag("--dot", sa.dot, "also write controller graphs");

    EvalArgs ea;
    double ea_gamma = -1;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate controllers on a problem");
    eval_cmd->add_option("--problem", ea.problem, "problem file")->required();
    eval_cmd->add_option("--fsc", ea.fsc_paths, "controller file, one per agent")
        ->required();
    eval_cmd->add_option("--eval-eps", ea.eval_eps, "evaluation residual");
    eval_cmd->add_option("--simulate", ea.simulate_episodes, "Monte-Carlo episodes");
    eval_cmd->add_option("--horizon", ea.horizon, "rollout horizon");
    eval_cmd->add_option("--seed", ea.seed, "simulation seed");
    eval_cmd->add_option("--gamma", ea_gamma, "discount override");

    CompileBrArgs ca;
    double ca_gamma = -1;
    auto* compile_cmd =
        app.add_subcommand("compile-br", "compile one agent's best-response model");
    compile_cmd->add_option("--problem", ca.problem, "problem file")->required();
    compile_cmd->add_option("--agent", ca.agent, "agent the model is for")->required();
    compile_cmd->add_option("--fsc", ca.fsc_paths, "controller file per other agent")
        ->required();
    compile_cmd->add_option("--br-form", ca.br_form, "momdp|lagged");
    compile_cmd->add_option("--out", ca.out, "output model file");
    compile_cmd->add_option("--gamma", ca_gamma, "discount override");
    compile_cmd->add_option("--capacity", ca.capacity, "extended state cap");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "run the benchmark suite");
    bench_cmd->add_option("--suite", ba.suite, "directory with problem files")->required();
    bench_cmd->add_option("--out", ba.out, "CSV report path");
    bench_cmd->add_option("--jobs", ba.jobs, "parallel restarts");
    bench_cmd->add_option("--seed", ba.seed, "master seed");
    bench_cmd->add_option("--gamma", ba.gamma, "discount for every problem");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (solve_cmd->parsed()) {
        if (sa_gamma > 0) sa.gamma = sa_gamma;
        return cmd_solve(sa);
    }
    if (eval_cmd->parsed()) {
        if (ea_gamma > 0) ea.gamma = ea_gamma;
        return cmd_eval(ea);
    }
    if (compile_cmd->parsed()) {
        if (ca_gamma > 0) ca.gamma = ca_gamma;
        return cmd_compile_br(ca);
    }
    if (bench_cmd->parsed()) return cmd_bench(ba);
    return kExitUsage;
}

}  // namespace jesp
